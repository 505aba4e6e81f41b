"""Anti-windup compensation for state and input saturation.

Subpackages by layer:

* :mod:`santw.linalg`, :mod:`santw.lti`: dense linear algebra and LTI models,
* :mod:`santw.sdp`, :mod:`santw.lmi`: LMI problems and the static/dynamic
  state anti-windup designs,
* :mod:`santw.hinf`: generalized plants and fixed-structure H-infinity synthesis,
* :mod:`santw.simulate`: fixed-step simulation of saturated loops,
* :mod:`santw.vsc`: grid-connected converter case,
* :mod:`santw.scenario`, :mod:`santw.cli`: scenario files and the command line.
"""
from .hinf import (
    CompensatorStructure,
    SynthesisOptions,
    build_isantw_plant,
    build_oantw_plant,
    mixed_sensitivity,
    synth_fixed_structure,
    synth_full_matrix,
)
from .lmi import algorithm1_dynamic, algorithm1_static, verify_certificate
from .lti import StateSpaceModel, hinf_norm, ss, tf
from .simulate import LoopConfig, SaturationSpec, dissipation_check, metrics, simulate

__version__ = "0.1.0"

__all__ = [
    "CompensatorStructure",
    "SynthesisOptions",
    "build_isantw_plant",
    "build_oantw_plant",
    "mixed_sensitivity",
    "synth_fixed_structure",
    "synth_full_matrix",
    "algorithm1_dynamic",
    "algorithm1_static",
    "verify_certificate",
    "StateSpaceModel",
    "hinf_norm",
    "ss",
    "tf",
    "LoopConfig",
    "SaturationSpec",
    "dissipation_check",
    "metrics",
    "simulate",
]
