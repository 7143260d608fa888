import numpy as np
import pytest
from PIL import Image


@pytest.fixture()
def image_folder(tmp_path):
    """Three-class image tree with deterministic pixel content."""
    gen = np.random.Generator(np.random.Philox(key=np.array([7, 0], dtype=np.uint64)))
    counts = {"ant": 4, "bee": 3, "cat": 5}
    for name, count in counts.items():
        class_dir = tmp_path / "images" / name
        class_dir.mkdir(parents=True)
        for i in range(count):
            pixels = gen.integers(0, 256, size=(24, 24, 3), dtype=np.uint8)
            Image.fromarray(pixels, "RGB").save(class_dir / f"{name}-{i}.png")
    return tmp_path / "images", counts
