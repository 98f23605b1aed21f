"""Composite models for both pipeline stages.

Stage 1 (:class:`ImageClassifier`) classifies single images: one shared
encoder feeds its spatial feature cells straight into the query head. Stage 2
(:class:`StudyClassifier`) classifies whole studies: view-specific encoders,
text encoding of indication and vitals, spatial reduction, and transformer
fusion, with learned placeholders for missing text modalities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..config import AblationFlags, ModelConfig
from ..data.sampling import subsample_views
from ..data.types import Dataset, Study, View, ViewImage
from ..data.vitals import render_vitals_text
from ..data.vocab import Vocabulary
from ..seeding import torch_rng
from .fusion import FusionModule
from .head import QueryDecoderHead
from .image_encoder import ImageEncoder
from .init import init_parameters
from .projection import TextToSpatial
from .text_encoder import TextEncoder


class ImageClassifier(nn.Module):
    def __init__(self, config: ModelConfig, role: str = "joint"):
        super().__init__()
        self.config = config
        self.encoder = ImageEncoder(config, role=role)
        self.head = QueryDecoderHead(config.channels, config.num_classes, config.fusion_heads)

    def feature_tokens(self, images: torch.Tensor) -> torch.Tensor:
        """Encode (m, C, H, W) images into (m, H'*W', C') token grids."""
        feats = self.encoder(images)
        m, c = feats.shape[0], feats.shape[1]
        return feats.permute(0, 2, 3, 1).reshape(m, -1, c)

    def forward(
        self,
        images: torch.Tensor,
        feature_dropout: float = 0.0,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        tokens = self.feature_tokens(images)
        if feature_dropout > 0.0:
            keep = 1.0 - feature_dropout
            mask = (
                torch.rand(tokens.shape, generator=generator, dtype=tokens.dtype) < keep
            ).to(tokens.dtype) / keep
            tokens = tokens * mask
        return self.head(tokens)

    @torch.no_grad()
    def predict_probs(self, pixels: np.ndarray) -> np.ndarray:
        """Sigmoid class probabilities for a (m, C, H, W) pixel array."""
        was_training = self.training
        self.eval()
        try:
            dtype = next(self.parameters()).dtype
            logits = self(torch.from_numpy(np.asarray(pixels)).to(dtype))
            return torch.sigmoid(logits).cpu().numpy()
        finally:
            self.train(was_training)


@dataclass
class StudySample:
    """A model-ready study: capped image stack plus token id sequences."""

    study_id: str
    pixels: torch.Tensor            # (N, C, H, W); N may be 0 in text-only modes
    is_frontal: tuple[bool, ...]
    indication_ids: torch.Tensor | None
    vitals_ids: torch.Tensor | None

    @property
    def num_images(self) -> int:
        return int(self.pixels.shape[0])


def select_images(
    study: Study,
    ablation: AblationFlags,
    cap: int,
    rng: np.random.Generator,
) -> tuple[ViewImage, ...]:
    """Pick the images a study contributes under the current modality flags."""
    if not ablation.uses_images:
        return ()
    if ablation.single_view:
        for image in study.images:
            if image.view is View.FRONTAL:
                return (image,)
        return (study.images[0],)
    return subsample_views(study, cap, rng)


def study_to_sample(
    study: Study,
    images: tuple[ViewImage, ...],
    vocab: Vocabulary,
    config: ModelConfig,
    ablation: AblationFlags,
    dtype: torch.dtype = torch.float32,
) -> StudySample:
    if images:
        pixels = torch.stack([torch.from_numpy(img.pixels).to(dtype) for img in images])
    else:
        pixels = torch.zeros(
            (0, config.in_channels, config.resolution, config.resolution), dtype=dtype
        )
    indication_ids = None
    if ablation.use_ci and study.indication is not None:
        ids = vocab.encode(study.indication, config.max_text_tokens)
        indication_ids = torch.tensor(ids, dtype=torch.long)
    vitals_ids = None
    if ablation.use_vs and study.vitals is not None:
        ids = vocab.encode(render_vitals_text(study.vitals), config.max_text_tokens)
        vitals_ids = torch.tensor(ids, dtype=torch.long)
    return StudySample(
        study_id=study.study_id,
        pixels=pixels,
        is_frontal=tuple(img.view is View.FRONTAL for img in images),
        indication_ids=indication_ids,
        vitals_ids=vitals_ids,
    )


class StudyClassifier(nn.Module):
    def __init__(self, config: ModelConfig, vocab_size: int, ablation: AblationFlags | None = None):
        super().__init__()
        self.config = config
        self.ablation = ablation if ablation is not None else AblationFlags()
        self.frontal_encoder = ImageEncoder(config, role="frontal")
        self.lateral_encoder = ImageEncoder(config, role="lateral")
        self.text_encoder = TextEncoder(config, vocab_size)
        self.text_to_spatial = TextToSpatial(config)
        self.fusion = FusionModule(config)
        self.head = QueryDecoderHead(config.channels, config.num_classes, config.fusion_heads)

    def _image_blocks(self, sample: StudySample) -> torch.Tensor | None:
        if not self.ablation.uses_images:
            return None
        if sample.num_images == 0:
            raise ValueError(f"study {sample.study_id}: image modality enabled but no images")
        frontal_idx = [i for i, f in enumerate(sample.is_frontal) if f]
        lateral_idx = [i for i, f in enumerate(sample.is_frontal) if not f]
        per_image: list[torch.Tensor | None] = [None] * sample.num_images
        if frontal_idx:
            feats = self.frontal_encoder(sample.pixels[frontal_idx])
            for j, i in enumerate(frontal_idx):
                per_image[i] = feats[j]
        if lateral_idx:
            feats = self.lateral_encoder(sample.pixels[lateral_idx])
            for j, i in enumerate(lateral_idx):
                per_image[i] = feats[j]
        return self.fusion.reduce(torch.stack(per_image))

    def _text_block(self, ids: torch.Tensor | None, modality: str) -> torch.Tensor | None:
        use = self.ablation.use_ci if modality == "indication" else self.ablation.use_vs
        if not use:
            return None
        if ids is None:
            return self.text_to_spatial.placeholder(modality)
        _, cls = self.text_encoder(ids)
        return self.text_to_spatial.project(cls)

    def forward(self, sample: StudySample) -> torch.Tensor:
        """Class logits for one study."""
        seq = self.fusion.assemble(
            self._image_blocks(sample),
            self._text_block(sample.indication_ids, "indication"),
            self._text_block(sample.vitals_ids, "vitals"),
        )
        return self.head(self.fusion.fuse(seq))

    def forward_batch(self, samples: list[StudySample]) -> torch.Tensor:
        return torch.stack([self(sample) for sample in samples])

    @torch.no_grad()
    def predict_dataset(
        self,
        dataset: Dataset,
        vocab: Vocabulary,
        seed: int,
        cap: int | None = None,
    ) -> tuple[list[str], np.ndarray]:
        """Per-study sigmoid probabilities with a fixed view-subsample seed."""
        from ..seeding import np_rng

        was_training = self.training
        self.eval()
        try:
            dtype = next(self.parameters()).dtype
            rng = np_rng(seed, "eval-views")
            cap = cap if cap is not None else self.config.view_cap
            ids, probs = [], []
            for study in dataset.studies:
                images = select_images(study, self.ablation, cap, rng)
                sample = study_to_sample(study, images, vocab, self.config, self.ablation, dtype)
                probs.append(torch.sigmoid(self(sample)).cpu().numpy())
                ids.append(study.study_id)
            return ids, np.stack(probs)
        finally:
            self.train(was_training)


def build_image_classifier(
    config: ModelConfig,
    seed: int,
    role: str = "joint",
    dtype: torch.dtype = torch.float32,
) -> ImageClassifier:
    model = ImageClassifier(config, role=role)
    init_parameters(model, torch_rng(seed, "init", "stage1", role))
    return model.to(dtype)


def build_study_classifier(
    config: ModelConfig,
    vocab_size: int,
    seed: int,
    ablation: AblationFlags | None = None,
    dtype: torch.dtype = torch.float32,
) -> StudyClassifier:
    model = StudyClassifier(config, vocab_size, ablation)
    init_parameters(model, torch_rng(seed, "init", "stage2"))
    return model.to(dtype)
