"""Quaternion attitude filters with estimate-independent measurement models.

Modules
-------
attitude
    Quaternions, rotation matrices, exponential maps and SE(3) elements.
error_models
    Error-state F, G and H matrices for the body, reference and SE(3)
    error definitions, and the group-affine residual.
engine
    Reference (numpy) propagation, update and retraction.
kernels
    Compiled batch versions of the filter and truth steps.
spacecraft
    Tumbling-spacecraft truth and sensor synthesis.
harness
    Monte Carlo scenarios and error statistics.
alignment
    Integrated vector observations for INS initial alignment.
"""

__version__ = "0.1.0"
