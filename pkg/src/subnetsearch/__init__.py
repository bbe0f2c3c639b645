"""Hardware-aware Pareto search over sub-network configurations.

Search spaces are fixed-length integer genomes with block activity rules;
searches run NSGA-II directly against measurements or against cheap surrogate
predictors (full search and concurrent search tactics), and search history can
be distilled into a reduced space via density-based constraint extraction.
"""

from .errors import SubnetSearchError
from .evalmgr import (
    EvaluationRecord,
    ExternalEvaluator,
    ResultStore,
    SyntheticSurface,
    SyntheticSurfaceEvaluator,
    TableEvaluator,
    evaluate_batch,
    make_surface,
    synthetic_evaluate,
    training_set,
)
from .evolver import (
    EvolverConfig,
    Individual,
    SearchTrace,
    crowding_distance,
    evolve,
    non_dominated_sort,
)
from .driver import (
    ConcurrentNasConfig,
    PredictorConfig,
    SearchReport,
    concurrent_search,
    full_search,
    hypervolume_trace,
)
from .objectives import (
    LatencyNormalizer,
    ObjectiveSpec,
    ObjectiveVector,
    ParetoFront,
    dominates,
    hypervolume_2d,
    normalize_latency,
    pareto_front,
)
from .popdb import (
    ClusterLabeling,
    ConstraintSet,
    build_constraints,
    constrain_space,
    elastic_frequencies,
    hdbscan,
)
from .predict import (
    KernelSpec,
    RidgeModel,
    SvrModel,
    fit_ridge,
    fit_svr,
    kendall_tau,
    mape,
    predict,
)
from .space import (
    BlockRule,
    ElasticParamSpec,
    Genotype,
    SearchSpace,
    canonicalize,
    cardinality,
    encode_features,
    enumerate_genotypes,
    get_preset,
    sample_uniform,
)

__version__ = "0.1.0"
