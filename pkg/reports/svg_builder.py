"""
Static SVG picture of the unit cell and its inclusion.
"""

from pathlib import Path
from typing import Optional

import numpy as np

from core.geometry import RadialShape, boundary_point
from core.specs import CellCase
from themes.base import Theme, get_theme


SVG_SAMPLES = 512
SVG_SIZE = 400


class ShapeSVGBuilder:
    """
    Builds the cell picture: the square, the filled inclusion (or hole) and
    its boundary polyline. The y axis points up as in the cell coordinates.
    """

    def __init__(self, theme: Optional[Theme] = None):
        self.theme = theme or get_theme()
        self.colors = self.theme.colors

    def build(self, shape: RadialShape, case: CellCase) -> str:
        phi = np.arange(SVG_SAMPLES) * (2.0 * np.pi / SVG_SAMPLES)
        points = boundary_point(shape, phi)
        polyline = " ".join(f"{x:.6f},{1.0 - y:.6f}" for x, y in points)
        fill = self.colors.inclusion_fill if case == CellCase.MIXTURE else self.colors.hole_fill
        stroke = self.theme.stroke_width
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{SVG_SIZE}" '
            f'viewBox="0 0 1 1">\n'
            f'<rect x="0" y="0" width="1" height="1" fill="{self.colors.matrix_fill}" '
            f'stroke="{self.colors.interface_stroke}" stroke-width="{stroke}"/>\n'
            f'<polygon points="{polyline}" fill="{fill}" '
            f'stroke="{self.colors.interface_stroke}" stroke-width="{stroke}"/>\n'
            f'</svg>\n'
        )


def write_shape_svg(
    shape: RadialShape,
    case: CellCase,
    path: Path,
    theme: Optional[Theme] = None
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(ShapeSVGBuilder(theme).build(shape, case))
    return path
