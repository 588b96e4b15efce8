"""Eye-gaze variation estimation from HEOG, neck EMG and head IMU signals."""

__version__ = "0.1.0"
