"""Camera-trap network analysis: ingest, sequence segmentation and the
statistical suite used to monitor terrestrial animal communities."""

__version__ = "0.1.0"

from camtrap.datamodel import (
    Camera,
    CameraLocation,
    Deployment,
    Detection,
    FailureEvent,
    ImageRecord,
    Plot,
    ProjectStore,
    Sequence,
    StoreError,
    ValidationError,
    WalkTest,
    effective_days,
    open_project,
)

__all__ = [
    "Camera",
    "CameraLocation",
    "Deployment",
    "Detection",
    "FailureEvent",
    "ImageRecord",
    "Plot",
    "ProjectStore",
    "Sequence",
    "StoreError",
    "ValidationError",
    "WalkTest",
    "effective_days",
    "open_project",
]
