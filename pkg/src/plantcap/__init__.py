"""Population size estimation for plant-capture surveys.

Models for surveys in which decoy "plants" are placed in the target
population and later report whether they were counted (yes / maybe / no),
optionally with partial identification and site classes. Estimation by
maximum likelihood, posterior sampling, a normal approximation to the
posterior, and a Chapman-Bailey baseline.
"""
__version__ = "0.1.0"

from .bna import BnaFit, bna_fit
from .chapman import CbScenario, chapman_bailey
from .data import (
    BasicCounts,
    ClassedCounts,
    IdCounts,
    LatentState,
    load_survey,
    snight_city,
    snight_dataset,
    validate,
    write_survey,
)
from .estimators import (
    ChapmanBaileyEstimator,
    PlantCaptureBayes,
    PlantCaptureBNA,
    PlantCaptureMLE,
    check_survey,
)
from .exceptions import PlantCaptureError
from .likelihood import BasicParams, ClassParams, IdParams, loglik_basic, loglik_class, loglik_id
from .mcmc import McmcConfig, McmcOutput, PriorSpec, diagnostics, sample_posterior, sample_posterior_up
from .mle import MleFit, mle_basic_closed, mle_numeric
from .simulation import SimReport, SimScenario, generate, preset_scenarios, run_study

__all__ = [
    "__version__",
    "BasicCounts", "IdCounts", "ClassedCounts", "LatentState", "validate",
    "load_survey", "write_survey", "snight_dataset", "snight_city",
    "BasicParams", "IdParams", "ClassParams", "loglik_basic", "loglik_id", "loglik_class",
    "MleFit", "mle_numeric", "mle_basic_closed",
    "PriorSpec", "McmcConfig", "McmcOutput", "sample_posterior", "sample_posterior_up", "diagnostics",
    "BnaFit", "bna_fit",
    "CbScenario", "chapman_bailey",
    "SimScenario", "SimReport", "generate", "run_study", "preset_scenarios",
    "PlantCaptureMLE", "PlantCaptureBNA", "PlantCaptureBayes", "ChapmanBaileyEstimator",
    "check_survey", "PlantCaptureError",
]
