"""Wi-Fi beamforming-feedback keystroke inference toolkit."""

__version__ = "0.1.0"
