"""Build the 256x256 grayscale benchmark set under data/benchmark/.

Sources are standard test images shipped inside public Python wheels:

    cameraman  scikit-image     skimage/data/camera.png
    lena       spams-bin 2.6.14 test/lena.png
    boat       spams-bin 2.6.14 test/boat.png
    monarch    sporco 0.2.2     sporco/data/monarch.png
    parrot     sporco 0.2.2     sporco/data/kodim23.png

Each is converted to 8-bit luminance (ITU-R 601), halved with a 2x2 box
filter and cropped to 256x256. Usage:

    python scripts/prepare_dataset.py WHEEL_DIR [OUT_DIR]
"""

import io
import sys
import zipfile
from pathlib import Path

import numpy as np
from PIL import Image

from nlrinterp.image import write_pgm_bytes

SOURCES = {
    "cameraman": ("skimage", "camera.png", None),
    "lena": ("spams_bin", "test/lena.png", None),
    "boat": ("spams_bin", "test/boat.png", None),
    "monarch": ("sporco", "sporco/data/monarch.png", 128),
    "parrot": ("sporco", "sporco/data/kodim23.png", 0),
}


def load(wheel_dir: Path, package: str, member: str) -> Image.Image:
    if package == "skimage":
        import skimage
        return Image.open(Path(skimage.__file__).parent / "data" / member)
    wheel = next(wheel_dir.glob(f"{package}-*.whl"))
    with zipfile.ZipFile(wheel) as zf:
        return Image.open(io.BytesIO(zf.read(member)))


def main(argv):
    wheel_dir = Path(argv[1])
    out_dir = Path(argv[2]) if len(argv) > 2 else Path("data/benchmark")
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (package, member, left) in SOURCES.items():
        im = load(wheel_dir, package, member).convert("L").reduce(2)
        w, h = im.size
        if left is None:
            left = (w - 256) // 2
        top = (h - 256) // 2
        im = im.crop((left, top, left + 256, top + 256))
        write_pgm_bytes(out_dir / f"{name}.pgm", np.asarray(im, dtype=np.uint8))
        print(f"{name}: {package}:{member} -> {out_dir / name}.pgm")


if __name__ == "__main__":
    main(sys.argv)
