"""Two-face comparison model that explains its verification decision in text.

The package covers the full desk-scale pipeline: a numpy autodiff core, a
synthetic paired-face corpus, the encoder/mapper/decoder model family, staged
training with an entropy-regularized objective, text metrics, a config-driven
ablation runner, and a CLI. `FaceMatchExplainer` wraps the pipeline in a
scikit-learn style estimator for interactive use.
"""

from facediff.config import ConfigError, RunConfig, parse_config
from facediff.data import (PairRecord, corpus_stats, generate_dataset,
                           load_dataset, save_dataset)
from facediff.estimator import FaceMatchExplainer, check_records
from facediff.mapper import ModelDims
from facediff.metrics import (MetricReport, bleu, evaluate_model, meteor_lite,
                              semscore, write_report)
from facediff.model import ArchConfig, Model, ModelParams, build_model
from facediff.tensor import (DimensionError, GradCheckReport, Tensor, grad_check,
                             no_grad)
from facediff.text import Vocab, build_vocab, detokenize, tokenize
from facediff.training import (LossConfig, TrainConfig, diversity_loss,
                               load_checkpoint, load_into, run_strategy,
                               save_checkpoint, train_stage)

__all__ = [
    "ArchConfig", "ConfigError", "DimensionError", "FaceMatchExplainer",
    "GradCheckReport", "LossConfig", "MetricReport", "Model", "ModelDims",
    "ModelParams", "PairRecord", "RunConfig", "Tensor", "TrainConfig", "Vocab",
    "bleu", "build_model", "build_vocab", "check_records", "corpus_stats",
    "detokenize", "diversity_loss", "evaluate_model", "generate_dataset",
    "grad_check", "load_checkpoint", "load_dataset", "load_into", "meteor_lite",
    "no_grad", "parse_config", "run_strategy", "save_checkpoint", "save_dataset",
    "semscore", "tokenize", "train_stage", "write_report",
]
