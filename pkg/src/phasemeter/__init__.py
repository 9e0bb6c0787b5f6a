"""Joint position-momentum measurement simulator and phase-space toolkit."""
