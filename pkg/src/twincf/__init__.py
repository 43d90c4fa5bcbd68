"""Discrete structural causal models, twin-network counterfactuals, ordering
checks, deep twin networks and probabilities of causation."""

from .errors import TwinCFError
from .scm import Scm, conditional, do, interventional, joint, load_scm, sample, validate
from .twin import (
    CounterfactualQuery,
    Estimate,
    Event,
    bench_compare,
    build_twin,
    counterfactual_aap,
    counterfactual_exact,
    counterfactual_mc,
)
from .ordering import (
    OrderingSpec,
    check_cf_ordering,
    check_interventional_premise,
    check_monotone,
    check_stability,
    infer_ordering,
)
from .causation import PocResult, counterfactual_table, poc_exact, poc_from_model, theorem2_residuals
from .learn import ModelConfig, TrainConfig, TwinDataset, TwinModel, make_labels, train

__version__ = "0.1.0"
