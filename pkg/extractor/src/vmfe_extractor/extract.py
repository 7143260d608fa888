"""Batch extraction: image source -> frozen encoder -> VMFE file."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .encoders import EncoderLoadError, get_encoder
from .format import write_vmfe

log = logging.getLogger("vmfe_extractor")

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp", ".tiff"}


@dataclass
class ExtractorConfig:
    model: str
    source: str  # image-folder path or a named benchmark ("cifar100")
    output: str
    batch_size: int = 64
    device: str = "cpu"
    split: str = "train"

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model identifier must be nonempty")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


@dataclass
class ExtractResult:
    rows: int
    num_classes: int
    dim: int
    skipped: int
    output: str


def _iter_folder(root: Path):
    """Yield (path, class_id) over <root>/<class-name>/<image>; sorted for
    reproducible row order."""
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise FileNotFoundError(f"{root} contains no class subdirectories")
    names = {i: p.name for i, p in enumerate(class_dirs)}
    entries = []
    for cls, class_dir in enumerate(class_dirs):
        for img_path in sorted(class_dir.iterdir()):
            if img_path.suffix.lower() in IMAGE_EXTENSIONS:
                entries.append((img_path, cls))
    return entries, names


def _iter_benchmark(name: str, split: str):
    """Named benchmark via torchvision; requires download access."""
    if name != "cifar100":
        raise FileNotFoundError(f"unknown benchmark {name!r}")
    try:
        from torchvision.datasets import CIFAR100
    except ImportError as exc:  # pragma: no cover
        raise EncoderLoadError("torchvision is required for named benchmarks") from exc
    ds = CIFAR100("./cifar100-data", train=(split == "train"), download=True)
    names = {i: c for i, c in enumerate(ds.classes)}
    entries = [(Image.fromarray(np.array(img)) if not isinstance(img, Image.Image) else img,
                int(lbl)) for img, lbl in ds]
    return entries, names


def extract(cfg: ExtractorConfig) -> ExtractResult:
    """Encode every image once, l2-normalize rows, write the VMFE file.

    Unreadable images are skipped with a warning and counted; a missing
    checkpoint is fatal (EncoderLoadError).
    """
    encoder = get_encoder(cfg.model, cfg.device)

    source_path = Path(cfg.source)
    if source_path.is_dir():
        entries, names = _iter_folder(source_path)
        loader = lambda item: Image.open(item)
    else:
        entries, names = _iter_benchmark(cfg.source, cfg.split)
        loader = lambda item: item

    t0 = time.time()
    blocks: list[np.ndarray] = []
    labels: list[int] = []
    batch_images: list[Image.Image] = []
    batch_labels: list[int] = []
    skipped = 0

    def flush():
        if batch_images:
            blocks.append(encoder.encode_batch(batch_images))
            labels.extend(batch_labels)
            batch_images.clear()
            batch_labels.clear()

    for item, cls in entries:
        try:
            img = loader(item)
            img.load() if hasattr(img, "load") else None
        except Exception as exc:
            skipped += 1
            log.warning("skipping unreadable image %s: %s", item, exc)
            continue
        batch_images.append(img)
        batch_labels.append(cls)
        if len(batch_images) >= cfg.batch_size:
            flush()
    flush()

    if not blocks:
        raise FileNotFoundError(f"no readable images under {cfg.source}")
    matrix = np.concatenate(blocks)
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if (norms == 0.0).any():
        raise RuntimeError("encoder produced a zero embedding; cannot normalize")
    matrix = (matrix / norms).astype(np.float32)

    write_vmfe(cfg.output, matrix, np.asarray(labels, dtype=np.uint32),
               num_classes=len(names), class_names=names)
    out_path = Path(cfg.output)
    manifest = {
        "model": cfg.model,
        "preprocessing": encoder.preprocessing,
        "source": cfg.source,
        "split": cfg.split,
        "batch_size": cfg.batch_size,
        "device": cfg.device,
        "rows": int(matrix.shape[0]),
        "dim": int(matrix.shape[1]),
        "num_classes": len(names),
        "skipped_images": skipped,
        "wall_time_seconds": time.time() - t0,
    }
    out_path.with_suffix(out_path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExtractResult(int(matrix.shape[0]), len(names), int(matrix.shape[1]),
                         skipped, cfg.output)
