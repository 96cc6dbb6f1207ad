"""Discrete graph diffusion with monotonic node insertion and deletion.

The package provides the full pipeline: time-dependent schedules, base and
augmented category-transition matrices (with absorbing ``DEL`` and transient
``DEL*`` states), forward corruption with size edits, the generalized reverse
posterior with activation times, classifier-free guidance, a small trainable
graph denoiser plus exact-Bayes oracles for enumerable toy families, and a
minimal molecular toolkit with evaluation protocols.
"""

from indeldiff.graph_core import CategorySpace, GraphState, SampleMarginals

__all__ = ["CategorySpace", "GraphState", "SampleMarginals"]
__version__ = "0.1.0"
