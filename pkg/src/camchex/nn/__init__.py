from .fusion import (
    SEGMENT_IMAGE,
    SEGMENT_INDICATION,
    SEGMENT_VITALS,
    FusionModule,
    JointSequence,
)
from .head import QueryDecoderHead
from .image_encoder import ChannelNorm, ConvBlock, ImageEncoder
from .init import init_parameters
from .model import (
    ImageClassifier,
    StudyClassifier,
    StudySample,
    build_image_classifier,
    build_study_classifier,
    select_images,
    study_to_sample,
)
from .projection import TEXT_MODALITIES, TextToSpatial
from .text_encoder import TextEncoder
from .transformer import TransformerLayer, TransformerStack

__all__ = [
    "SEGMENT_IMAGE",
    "SEGMENT_INDICATION",
    "SEGMENT_VITALS",
    "TEXT_MODALITIES",
    "ChannelNorm",
    "ConvBlock",
    "FusionModule",
    "ImageClassifier",
    "ImageEncoder",
    "JointSequence",
    "QueryDecoderHead",
    "StudyClassifier",
    "StudySample",
    "TextEncoder",
    "TextToSpatial",
    "TransformerLayer",
    "TransformerStack",
    "build_image_classifier",
    "build_study_classifier",
    "init_parameters",
    "select_images",
    "study_to_sample",
]
