"""Interpretability tools: kernel spectra, hidden-layer t-SNE and segment phase analysis."""
from .clustering import kmeans, matched_agreement
from .export import write_kernel_spectra, write_phase_amp, write_tsne_points
from .phase import (PhaseAmp, circular_mean, estimate_phase_amplitude, fit_sinusoid,
                    segment_phase_report)
from .spectra import band_concentration, kernel_spectrum, model_kernel_spectra
from .tsne import Embedding2D, conditional_probabilities, tsne


def extract_activations(model, segments, layer: int, batch_size: int = 256):
    """Inference-mode activations ``(n, d)`` of block ``layer`` (1, 2 or 3), rows in input order."""
    return model.activations(segments, layer, batch_size)


__all__ = [
    "Embedding2D", "PhaseAmp", "band_concentration", "circular_mean", "conditional_probabilities",
    "estimate_phase_amplitude", "extract_activations", "fit_sinusoid", "kernel_spectrum", "kmeans",
    "matched_agreement", "model_kernel_spectra", "segment_phase_report", "tsne",
    "write_kernel_spectra", "write_phase_amp", "write_tsne_points",
]
