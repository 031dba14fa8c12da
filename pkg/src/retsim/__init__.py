"""retsim: simulator for robot-assisted non-contact pCLE retinal scanning.

The package models a 5-DOF assistive robot holding a confocal probe above a
curved tissue phantom, scores the streamed image sharpness with a
no-reference blur metric, and closes the loop with a hybrid controller that
leaves lateral scanning to the operator while an image-based optimizer holds
the probe in the sub-millimetre focus band.
"""

__version__ = "0.1.0"
