"""TabularLIME for regression with a closed-form oracle for its expected coefficients."""

from .errors import (
    DegenerateDesign,
    DegenerateGrid,
    LimeLensError,
    NearDegenerateBin,
    NumericalError,
    UsageError,
)
from .models import (
    Dataset,
    FunctionModel,
    KernelRidgeModel,
    LinearModel,
    evaluate,
    finite_diff_gradient,
    fit_gaussian,
    fit_linear,
    load_dataset,
    save_dataset,
    train_kernel_ridge,
)
from .sampling import (
    PerturbationSet,
    QuantileGrid,
    SamplingConfig,
    discretize,
    empirical_grid,
    perturb,
    theoretical_grid,
)
from .surrogate import Explanation, build_design, explain, wls_solve
from .theory import TheoryReport, beta_closed_form, theory_report

__version__ = "0.1.0"
