"""Semantic-prior-guided low-light image enhancement on a Retinex split."""

from .imaging import (PSNR_SENTINEL, GradientField, MetricReport, evaluate_pair, load_image, psnr,
                      save_image, spatial_gradient, ssim)
from .retinex import RetinexPair, decompose, recompose
from .semantic_prior import SemanticPrior, extract_prior, make_toy_backend
from .sem_attention import SemanticEmbedding, correlation_map, sem_forward
from .text_prior import (PromptPair, cosine_similarity, embed_image, embed_text, multimodal_loss,
                         ToyVisionLanguageBackend)
from .objective import (LossBreakdown, LossSwitches, LossWeights, edge_loss, pixel_loss, semantic_loss,
                        total_loss)
from .network import NetConfig, build_model, count_parameters, enhance
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, desk_config, load_config
from .data import PairedDataset, load_dataset, overfit_suite
from .training import evaluate, run_ablation, train, train_step

__version__ = "0.1.0"
