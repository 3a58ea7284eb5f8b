"""Label-card images for synthetic trials.

A card is a plain drawing of the visible objects' silhouette outlines with
their names, standing in for an egocentric camera frame.  Output is PNG
bytes and depends only on the inputs.
"""

from __future__ import annotations

import io
from typing import Sequence

from PIL import Image, ImageDraw, ImageFont

CARD_SIZE = 448


def render_label_card(
    names: Sequence[str],
    outlines: Sequence[Sequence[tuple[float, float]]] | None = None,
    fov_deg: float = 50.0,
    size: int = CARD_SIZE,
) -> bytes:
    """PNG with one outline per object (angular degrees) and its name.

    Without outlines the names are listed down the left edge.
    """
    img = Image.new("RGB", (size, size), "white")
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    scale = size / (2.0 * fov_deg)

    def to_px(az, el):
        return (size / 2 + az * scale, size / 2 + el * scale)

    if outlines:
        for name, poly in zip(names, outlines):
            pts = [to_px(az, el) for az, el in poly]
            draw.polygon(pts, outline="black")
            cx = sum(p[0] for p in pts) / len(pts)
            cy = sum(p[1] for p in pts) / len(pts)
            draw.text((cx, cy), name, fill="black", font=font, anchor="mm")
    else:
        for i, name in enumerate(names):
            draw.text((8, 8 + 14 * i), name, fill="black", font=font)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def card_loader(recordings: dict):
    """Image loader for ``card:<recording_id>@<t_ns>`` refs that draws the
    silhouettes of the frame's visible objects."""
    from .geometry import AngularPolygon
    from .scene import silhouette
    from .vlm import QueryPayload, default_image_loader

    def load(payload: QueryPayload) -> bytes:
        ref = payload.image_ref
        if not ref.startswith("card:"):
            return default_image_loader(payload)
        rec_id, _, t = ref[5:].rpartition("@")
        rec = recordings.get(rec_id)
        if rec is None:
            return default_image_loader(payload)
        frame = rec.frames[rec.nearest_frame_index(int(t))]
        by_name = {rec.name_of(o.object_id): o for o in frame.observations}
        names, outlines = [], []
        for name in payload.visible_objects:
            obs = by_name.get(name)
            poly = silhouette(rec, frame, obs) if obs is not None else None
            if isinstance(poly, AngularPolygon):
                names.append(name)
                outlines.append(poly.vertices)
        return render_label_card(names, outlines, rec.camera.max_fov_deg)

    return load
