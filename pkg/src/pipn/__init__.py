"""Physics-informed PointNet for inverse plane-stress thermoelasticity.

A single network is trained over a whole family of plate-with-cavity
geometries at once: it predicts the displacement field on every member of
the family from the known temperature field plus a handful of displacement
sensors, by minimizing the momentum-balance residuals together with the
sensor mismatch.  Ground truth and sensor data come from an in-repo
finite-element solver.
"""

from pipn.geometry import DomainSpec, FamilyFilter, PointCloud, SensorSet
from pipn.model import ArchDescriptor, PipnModel, build_pipn
from pipn.training import TrainConfig, WeightSchedule, evaluate, train

__all__ = [
    "ArchDescriptor",
    "DomainSpec",
    "FamilyFilter",
    "PipnModel",
    "PointCloud",
    "SensorSet",
    "TrainConfig",
    "WeightSchedule",
    "build_pipn",
    "evaluate",
    "train",
]

__version__ = "0.1.0"
