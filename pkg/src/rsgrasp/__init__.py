"""Rigid-soft interactive grasping with proprioceptive soft fingers, simulated in the plane."""

from .calibration import CalibrationModel, SensorSample, fit, r_squared, rmse
from .mechanics import GraspState, anti_disturbance_margin, equilibrium_residual, friction_cone_check
from .optimizer import OptimizationParams, OptimizedGrasp, Proprioception, interactive_grasp
from .scene import BaseMode, GripperConfiguration, ObjectShape
from .sensor import DeformationVector, FingerResponseModel, ReactionWrench, flux_loss

__version__ = "0.1.0"

__all__ = [
    "BaseMode",
    "CalibrationModel",
    "DeformationVector",
    "FingerResponseModel",
    "GraspState",
    "GripperConfiguration",
    "ObjectShape",
    "OptimizationParams",
    "OptimizedGrasp",
    "Proprioception",
    "ReactionWrench",
    "SensorSample",
    "anti_disturbance_margin",
    "equilibrium_residual",
    "fit",
    "flux_loss",
    "friction_cone_check",
    "interactive_grasp",
    "r_squared",
    "rmse",
]
