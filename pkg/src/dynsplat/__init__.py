"""dynsplat: dynamic 3D Gaussian scenes driven by sparse control points.

Appearance lives in canonical-space Gaussians; motion lives in a small set of
control points whose time-varying rigid transforms are predicted by an MLP and
blended onto the Gaussians with RBF-weighted skinning. The package covers
reconstruction training, novel-time/view rendering, and interactive
as-rigid-as-possible motion editing.
"""

__version__ = "0.1.0"
