"""Regenerate the golden transform images.

Run from the repository root:

    python3 tests/golden/generate.py

The base image is rendered once from a fixed seed; each golden file is the
quantized output of one confounder transform at a pinned u value. The
acceptance suite compares freshly computed transforms against these files
byte for byte, so regenerate them only when the transforms are meant to
change.
"""

from pathlib import Path

import numpy as np

from cfkd.datasets import (
    CONFOUNDER_KINDS,
    BaseSampleSpec,
    quantize_to_grid,
    render_base_image,
    render_confounder,
    save_image_png,
)

GOLDEN_SEED = 1907
U_VALUES = {"u000": 0.0, "u050": 0.5, "u100": 1.0}


def golden_base() -> np.ndarray:
    """The unquantized stripe image every golden transform starts from."""
    rng = np.random.default_rng(GOLDEN_SEED)
    return render_base_image(BaseSampleSpec(), label=1, rng=rng)


def main() -> None:
    out = Path(__file__).parent
    base = golden_base()
    save_image_png(quantize_to_grid(base), out / "base.png")
    for kind in CONFOUNDER_KINDS:
        for tag, u in U_VALUES.items():
            img = quantize_to_grid(render_confounder(base, kind, u))
            save_image_png(img, out / f"{kind}_{tag}.png")
    print(f"wrote {1 + len(CONFOUNDER_KINDS) * len(U_VALUES)} golden images to {out}")


if __name__ == "__main__":
    main()
