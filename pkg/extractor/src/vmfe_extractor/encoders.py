"""Image encoder backends.

Model identifiers route to a backend:

    stub:<dim>   deterministic offline encoder (tests, demos): 16x16 RGB
                 downsample followed by a fixed random projection.
    <hf id>      any Hugging Face checkpoint with pooled image features
                 (CLIP/SigLIP families), e.g. "openai/clip-vit-large-patch14".
                 Requires torch + transformers and checkpoint access.

Encoders are frozen: no gradients, eval mode, identical outputs for
identical inputs (up to accelerator nondeterminism for the real ones).
"""
from __future__ import annotations

import numpy as np
from PIL import Image


class EncoderLoadError(RuntimeError):
    """Checkpoint could not be resolved or loaded; fatal."""


class StubEncoder:
    """Deterministic projection encoder; no checkpoint, no network.

    Downsamples to 16x16 RGB, appends a constant channel so no image
    can map to the zero vector, and projects with a Philox-seeded
    Gaussian matrix fixed by the output dimension.
    """

    patch = 16

    def __init__(self, dim: int):
        if dim < 2:
            raise EncoderLoadError(f"stub dimension must be >= 2, got {dim}")
        self.dim = dim
        gen = np.random.Generator(np.random.Philox(key=np.array([dim, 0xE57AC7],
                                                                 dtype=np.uint64)))
        self._projection = gen.standard_normal((3 * self.patch * self.patch + 1, dim))

    @property
    def preprocessing(self) -> str:
        return f"RGB bilinear resize to {self.patch}x{self.patch}, fixed random projection"

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        rows = []
        for img in images:
            pixels = np.asarray(
                img.convert("RGB").resize((self.patch, self.patch), Image.BILINEAR),
                dtype=np.float64).ravel() / 255.0
            rows.append(np.append(pixels, 1.0))
        return np.stack(rows) @ self._projection


class HfVisionEncoder:
    """Pooled image features from a Hugging Face contrastive checkpoint."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            import torch
            from transformers import AutoModel, AutoProcessor
        except ImportError as exc:  # pragma: no cover
            raise EncoderLoadError(
                "torch and transformers are required for checkpoint encoders; "
                "install with the [hf] extra") from exc
        try:
            self._model = AutoModel.from_pretrained(model_id).to(device).eval()
            self._processor = AutoProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderLoadError(f"failed to load checkpoint {model_id!r}: {exc}") from exc
        if not hasattr(self._model, "get_image_features"):
            raise EncoderLoadError(
                f"{model_id!r} does not expose pooled image features")
        self._torch = torch
        self._device = device
        self.model_id = model_id
        with torch.no_grad():
            probe = self.encode_batch([Image.new("RGB", (32, 32))])
        self.dim = int(probe.shape[1])

    @property
    def preprocessing(self) -> str:
        return f"{type(self._processor).__name__} defaults for {self.model_id}"

    def encode_batch(self, images: list[Image.Image]) -> np.ndarray:
        torch = self._torch
        inputs = self._processor(images=[img.convert("RGB") for img in images],
                                 return_tensors="pt").to(self._device)
        with torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.detach().cpu().numpy().astype(np.float64)


def get_encoder(model_id: str, device: str = "cpu"):
    if not model_id:
        raise EncoderLoadError("model identifier must be nonempty")
    if model_id.startswith("stub:"):
        try:
            dim = int(model_id.split(":", 1)[1])
        except ValueError as exc:
            raise EncoderLoadError(f"bad stub spec {model_id!r}; use stub:<dim>") from exc
        return StubEncoder(dim)
    return HfVisionEncoder(model_id, device)
