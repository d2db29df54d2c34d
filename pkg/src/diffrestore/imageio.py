"""PFM and PNG output.  Images are ``(H, W, 3)`` arrays whose row 0 is the top."""

import re

import numpy as np

GAMMA = 2.2


def write_pfm(path, image):
    """Little-endian 32-bit color PFM (rows stored bottom to top)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("PFM output expects an (H, W, 3) image")
    h, w, _ = image.shape
    data = np.ascontiguousarray(image[::-1].astype("<f4"))
    with open(path, "wb") as fh:
        fh.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s", raw)
    if not m:
        raise ValueError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h, scale = int(m.group(2)), int(m.group(3)), float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(raw[m.end():], dtype=dtype, count=w * h * channels)
    return data.reshape(h, w, channels)[::-1].astype(np.float64)


def tonemap(image, exposure=1.0, gamma=GAMMA):
    """Exposure scale, clamp to [0, 1], gamma encode, quantize to 8 bits."""
    v = np.clip(np.asarray(image, dtype=np.float64) * exposure, 0.0, 1.0)
    return np.round(255.0 * v ** (1.0 / gamma)).astype(np.uint8)


def write_png(path, image, exposure=1.0):
    from PIL import Image

    Image.fromarray(tonemap(image, exposure), mode="RGB").save(path)
