"""EEG trial classification from inter-channel energy differences with a bi-LSTM."""

__version__ = "0.1.0"

from .bilstm import BiLstmClassifier, BiLstmModel, TrainConfig
from .dataset import Dataset, PipelineConfig, build_dataset
from .features import EnergyDiffTransformer
from .ingest import ChannelLayout, LabelSpan, Recording, load_recording, write_recording

__all__ = [
    "BiLstmClassifier", "BiLstmModel", "ChannelLayout", "Dataset", "EnergyDiffTransformer",
    "LabelSpan", "PipelineConfig", "Recording", "TrainConfig", "build_dataset",
    "load_recording", "write_recording",
]
