"""Weakly supervised text classification with contrastive self-training."""

from .config import TrainConfig, load_config
from .dataset import Dataset, Sample, load_jsonl, save_jsonl
from .encoder import EncoderConfig, ModelParams, featurize, forward, backward
from .synthetic import SyntheticSpec, generate_benchmark
from .trainer import run
from .weak_rules import ABSTAIN, LabelSpace, Rule, RuleSet, label_dataset, vote

__version__ = "0.1.0"
