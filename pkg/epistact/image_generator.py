"""PNG rendering of the power-set confusion matrix."""

import logging
import os

# Try to import PIL, log warning if missing
try:
    from PIL import Image, ImageDraw, ImageFont

    PIL_AVAILABLE = True
except ImportError:
    PIL_AVAILABLE = False

from .metrics import ConfusionMatrix

_LOGGER = logging.getLogger(__name__)

CELL = 64
MARGIN = 24


def _load_fonts():
    """Header and cell fonts, falling back to Pillow's bitmap font."""
    if not PIL_AVAILABLE:
        return None, None

    package_dir = os.path.dirname(__file__)
    font_candidates = [
        os.path.join(package_dir, "DejaVuSans.ttf"),
        "DejaVuSans.ttf",
        "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
        "/usr/share/fonts/ttf-dejavu/DejaVuSans.ttf",  # Alpine
        "arial.ttf",
    ]
    s_header = 20
    s_cell = 13

    found_path = None
    for path in font_candidates:
        if os.path.exists(path):
            found_path = path
            break
        try:
            ImageFont.truetype(path, s_header)
            found_path = path
            break
        except OSError:
            continue

    if not found_path:
        for search_dir in ("/usr/share/fonts", "/usr/local/share/fonts"):
            if not os.path.isdir(search_dir):
                continue
            for root, _, files in os.walk(search_dir):
                sans = [f for f in files if f.lower().endswith(".ttf") and "sans" in f.lower()]
                if sans:
                    found_path = os.path.join(root, sorted(sans)[0])
                    break
            if found_path:
                break

    if found_path:
        try:
            return ImageFont.truetype(found_path, s_header), ImageFont.truetype(found_path, s_cell)
        except OSError:
            pass
    return ImageFont.load_default(), ImageFont.load_default()


def _place(draw, xy, text, font, fill, anchor="mm"):
    """Draw text aligned on xy (anchor as horizontal+vertical, e.g. "mt")."""
    left, top, right, bottom = draw.textbbox((0, 0), text, font=font)
    w, h = right - left, bottom - top
    x, y = xy
    horizontal, vertical = anchor
    x -= {"l": 0, "m": w // 2, "r": w}[horizontal]
    y -= {"t": 0, "m": h // 2, "b": h}[vertical]
    draw.text((x - left, y - top), text, font=font, fill=fill)


def _shade(percent: float) -> tuple[int, int, int]:
    level = int(round(255 - 2.2 * percent))
    level = max(35, min(255, level))
    return (level, level, level)


def generate_confusion_image(
    matrix: ConfusionMatrix, file_path: str, title: str = "Confusion matrix"
) -> bool:
    """Row-normalized heatmap, gold on rows; classes that never occur are left out.

    Returns False when Pillow is unavailable.
    """
    if not PIL_AVAILABLE:
        _LOGGER.warning("PIL (Pillow) not found. Cannot generate image.")
        return False

    font_header, font_cell = _load_fonts()
    keep = matrix.visible() or list(range(len(matrix.classes)))
    names = [matrix.names[i] for i in keep]
    percentages = matrix.percentages

    label_w = 110
    top = MARGIN + 40 + 40
    width = max(420, MARGIN * 2 + label_w + CELL * len(keep))
    height = top + CELL * len(keep) + MARGIN + 30

    img = Image.new("RGB", (width, height), "white")
    draw = ImageDraw.Draw(img)
    _place(draw, (width // 2, MARGIN), title, font_header, "black", "mt")

    x0 = MARGIN + label_w
    for col, name in enumerate(names):
        _place(draw, (x0 + col * CELL + CELL // 2, top - 12), name, font_cell, "black", "mb")
    for row, i in enumerate(keep):
        y = top + row * CELL
        _place(draw, (x0 - 8, y + CELL // 2), names[row], font_cell, "black", "rm")
        for col, j in enumerate(keep):
            value = float(percentages[i, j])
            fill = _shade(value)
            box = [x0 + col * CELL, y, x0 + (col + 1) * CELL, y + CELL]
            draw.rectangle(box, fill=fill, outline="#c0c0c0")
            if value > 0:
                ink = "white" if fill[0] < 128 else "black"
                _place(draw, (box[0] + CELL // 2, y + CELL // 2), f"{value:.0f}", font_cell, ink)
    draw.text(
        (MARGIN, height - MARGIN), "rows: gold, columns: predicted, % of row", font=font_cell, fill="gray"
    )

    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    img.save(file_path)
    _LOGGER.info("Saved confusion image to %s", file_path)
    return True
