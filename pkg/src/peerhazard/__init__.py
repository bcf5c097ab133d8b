"""Peer effects in irreversible adoption via latent continuous-time exponential races."""

from .net import (
    Network,
    components,
    make_block_network,
    make_homophilic_network,
    read_edge_list,
    write_edge_list,
)
from .rates import RateContext, Theta, rate, rate_grad, rate_hess
from .data import Sample
from .process import Trajectory, counterfactual_sample, potential_time, simulate
from .likelihood import (
    ComponentData,
    LikelihoodEval,
    LikelihoodOptions,
    loglik_exact,
    loglik_sampled,
    perm_term,
    split_sample,
    total_loglik,
)

__all__ = [
    "Network", "components", "make_block_network", "make_homophilic_network",
    "read_edge_list", "write_edge_list",
    "RateContext", "Theta", "rate", "rate_grad", "rate_hess",
    "Sample",
    "Trajectory", "counterfactual_sample", "potential_time", "simulate",
    "ComponentData", "LikelihoodEval", "LikelihoodOptions",
    "loglik_exact", "loglik_sampled", "perm_term", "split_sample", "total_loglik",
]
