"""Importance sampling for discrete Bayesian networks.

The pipeline: delete edges until the network is tractable, variationally fit
the simplified network's tables to the original prior, compile an importance
function from its bucket-elimination tables, and sample in batches with
annealed adaptation and correlation-directed sharpening.  An enumeration
oracle and exact bucket elimination back every estimate at desk scale.
"""

from .model import (BayesianNetwork, Cpt, GeneratorConfig, NetworkFormatError,
                    NetworkValidationError, ValidationFinding, Variable,
                    evidence_indices, generate_random_network, joint_log_prob,
                    joint_log_prob_batch, parse_network, serialize_network,
                    topological_order, validate_network)
from .exact import (Bucket, BucketScheme, DominationError, EliminationOrder,
                    EnumerationCapError, Factor, TableCapError,
                    bucket_eliminate, enumerate_likelihood,
                    exact_kl_to_posterior, exact_power_moment, min_fill_order,
                    prior_marginal)
from .simplify import (SimplifiedNetwork, del_edges, edge_mutual_information,
                       prior_kl, remove_evidence_nodes, var_tech_fit)
from .proposal import (FLATTEN, SHARPEN, ProposalDistribution, QTable,
                       ReinstatedFactor, SampleRecord, anneal_update,
                       anneal_update_from_matrix, build_proposal, direct_transform,
                       draw_sample, dump_tables, reinstated_factor)
from .engine import (BatchStats, EstimatorState, PriorProposal, RunReport,
                     SamplerConfig, StaticEstimate, acceptance_probability,
                     batch_weight, combine_batches, correlation_threshold,
                     correlation_trigger, estimate_static, kl_estimate,
                     likelihood_weighting, mixing_rate, pearson, power_mean,
                     run_varis, sis_star)

__version__ = "0.1.0"
