"""camchex: two-stage multi-view, multimodal chest X-ray study classification.

Stage 1 trains an image-level classifier (convolutional encoder plus a
query-decoder head) with noisy-student self-training and then specializes it
into frontal and lateral encoders. Stage 2 fuses per-view image features with
encoded clinical-indication and vital-signs text in a transformer and decodes
study-level multi-label predictions. A synthetic planted-signal generator and
a long-tail evaluation suite make the whole pipeline testable at desk scale.
"""

__version__ = "0.1.0"
