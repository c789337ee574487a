"""Exact analysis of finite products: the reference the learning code is checked against."""
from .checks import (
    check_lemma1,
    check_lemma2,
    check_mc_agreement,
    check_shaping_invariance,
    check_theorem1,
    check_theorem3,
    random_policy,
)
from .mdp import FiniteMdp, FiniteMdpEnv, MdpError, load_mdp, save_mdp
from .product import REJECT, FiniteEpmdp, build_product, simulate
from .solve import (
    ConvergenceError,
    ValueTable,
    chain_classes,
    chain_reach_probability,
    classify_mecs,
    max_reach_probability,
    mec_decomposition,
    value_iteration,
)
