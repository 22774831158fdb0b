"""Toolkit for bilinear Bogolyubov constructions over prime fields."""

from .bogolyubov import bogolyubov_subspace, find_representation, max_subspace_bruteforce, robust_certificate
from .gf import AffineMap, BilinearForm, MapFamily, Subspace, canonical_basis, min_rank_element, project_along
from .phi import GridSet, Word, count_table, phi_bruteforce, phi_robust, phi_step, phi_word
from .pipeline import BilinearVariety, PipelineConfig, mapsubspace, run_pipeline, run_pipeline_robust
from .setlab import DenseSet, additive_energy, convolve_counts, density, diff_rep_counts, fourier, spectrum

__all__ = [
    "AffineMap",
    "BilinearForm",
    "BilinearVariety",
    "DenseSet",
    "GridSet",
    "MapFamily",
    "PipelineConfig",
    "Subspace",
    "Word",
    "additive_energy",
    "bogolyubov_subspace",
    "canonical_basis",
    "convolve_counts",
    "count_table",
    "density",
    "diff_rep_counts",
    "find_representation",
    "fourier",
    "mapsubspace",
    "max_subspace_bruteforce",
    "min_rank_element",
    "phi_bruteforce",
    "phi_robust",
    "phi_step",
    "phi_word",
    "project_along",
    "robust_certificate",
    "run_pipeline",
    "run_pipeline_robust",
    "spectrum",
]
