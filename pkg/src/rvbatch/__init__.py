"""Random batch and reduced-variance random batch particle solvers."""

from .analysis import (
    DensityGrid,
    KdeConfig,
    entropy_H,
    kde,
    l1_distance,
    mean_error,
    moments,
    rmse_over_repeats,
)
from .batch import (
    BatchPlan,
    batch_drift,
    batch_mean_velocity,
    full_drift,
    make_batches,
    make_independent_batches,
)
from .control_variate import (
    CvConfig,
    CvState,
    collect_cv_samples,
    cv_drift,
    estimate_lambda,
    multi_cluster_cv_drift,
)
from .ensemble import Ensemble, init_ensemble, wiener_increment
from .integrate import RunOutput, SimConfig, SimulationError, coupled_run, run, step
from .models import (
    DiffusionSpec,
    DiffusionVariant,
    KernelSpec,
    KernelVariant,
    ModelSpec,
    SurrogateSpec,
    SurrogateVariant,
    beta_equilibrium_density,
    eval_diffusion_coefficient,
    eval_kernel,
    eval_surrogate,
    maxwellian_density,
)
from .rng import RngKey, StreamKind

__version__ = "0.1.0"
