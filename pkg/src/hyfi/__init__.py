"""Hyperbolic feature interpolation: Lorentz-model geometry, geodesic fusion of
semantic and perceptual features, and contrastive cross-modal alignment, with a
synthetic retrieval benchmark and property suites."""

__version__ = "0.1.0"

from .grad import ParamVector, finite_diff_grad, value_and_grad
from .hygeo import (LorentzPoint, TangentVector, exp_map, exp_map_origin,
                    geodesic_distance, lift, log_map, lorentz_inner, origin)
from .interp import (InterpCoefficients, compression_gap, geodesic_interpolate,
                     interpolation_coefficient, sinh_coefficients)
from .model import (EmbeddingBatch, HyfiParams, ModelConfig, contrastive_loss,
                    encode_brain, encode_visual_pair, init_params, load_checkpoint,
                    save_checkpoint, total_loss)
from .synth import (PairedDataset, SynthConfig, fovea_blur, gaussian_blur, generate,
                    read_embeddings, write_embeddings)
from .trainer import (AdamState, RetrievalReport, TrainConfig, coefficient_stats,
                      evaluate_retrieval, optimizer_step, root_distance_stats, train)
