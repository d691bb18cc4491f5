"""Differentially private synthetic tabular data.

Two families of mechanisms behind one evaluation harness: workload-aware
private evolution against a pluggable candidate generator, and one-shot
pipelines that reuse generator records as public data, plus the baseline
suite needed to compare them honestly.
"""

from .data import (
    ClampPolicy,
    ColumnSpec,
    Dataset,
    Provenance,
    TableSchema,
    bin_index,
    domain_size,
    load_dataset,
    save_dataset,
)
from .workload import (
    AnswerVector,
    LinearQuery,
    Workload,
    build_grouped_numeric_workload,
    build_marginal_workload,
    evaluate,
    nearest_candidate,
    wdist,
    workload_error,
)
from .privacy import (
    AccountantLedger,
    BudgetSchedule,
    NoiseSpec,
    PrivacyBudget,
    RandomStreams,
    add_gaussian,
    calibrate,
    clamp_normalize,
    make_schedule,
)
from .generators import (
    CachedGenerator,
    CandidateGenerator,
    EndpointConfig,
    GenerationParams,
    GeneratorBatch,
    GeneratorRequest,
    MockGenerator,
    MockPriorConfig,
    RemoteGenerator,
    cache_load,
    cache_store,
)
from .evolution import PeConfig, PeTrace, VoteHistogram, run_pe
from .publicfit import (
    FitOptions,
    MeasurementPlan,
    NoisyAnswers,
    PublicWeights,
    fit_weights,
    gemini_inference,
    jam_lite,
    measure_noisy,
    mst_lite,
    mwem_refine,
    sample_from_weights,
)
from .baselines import (
    dp_workload,
    generator_no_dp,
    independent_baseline,
    uniform_public,
)
from .synthesizers import (
    GeminiInference,
    IndependentMarginals,
    JamLite,
    MstLite,
    PrivateEvolution,
    PublicMwem,
)
from .harness import ExperimentConfig, compare_methods, run_experiment

__version__ = "0.1.0"
