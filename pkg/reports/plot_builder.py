"""
Plotly HTML report for optimization runs.

Left panel: final interface in the unit cell. Right panel: J and the
gradient norm per accepted iteration on a log scale.
"""

from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from core.geometry import RadialShape, boundary_point
from core.homogenize import EffectiveTensor
from core.optimize import OptimizeRecord
from core.specs import CellCase
from themes.base import Theme, get_theme
from themes.html_builders import HTMLPageBuilder, HTMLTableBuilder


PLOT_SAMPLES = 512


class ReportPlotBuilder:
    """Builds themed Plotly figures from an optimizer record."""

    def __init__(self, theme: Optional[Theme] = None):
        self.theme = theme or get_theme()
        self.colors = self.theme.colors

    def _axis(self, **extra) -> dict:
        axis = dict(
            showgrid=True,
            gridcolor=self.colors.chart_grid,
            title_font={'size': 11, 'color': self.colors.text_muted},
            tickfont={'size': 10, 'color': self.colors.text_muted},
            showline=True,
            linecolor=self.colors.chart_axis,
            mirror=True,
        )
        axis.update(extra)
        return axis

    def build_figure(self, shape: RadialShape, case: CellCase, record: OptimizeRecord) -> go.Figure:
        fig = make_subplots(rows=1, cols=2, subplot_titles=("Final shape", "Convergence"))

        phi = np.arange(PLOT_SAMPLES + 1) * (2.0 * np.pi / PLOT_SAMPLES)
        points = boundary_point(shape, phi)
        fill = self.colors.inclusion_fill if case == CellCase.MIXTURE else self.colors.hole_fill
        fig.add_trace(
            go.Scatter(
                x=[0, 1, 1, 0, 0], y=[0, 0, 1, 1, 0], mode="lines", fill="toself",
                fillcolor=self.colors.matrix_fill, line=dict(color=self.colors.interface_stroke, width=1),
                name="cell", showlegend=False,
            ),
            row=1, col=1,
        )
        fig.add_trace(
            go.Scatter(
                x=points[:, 0], y=points[:, 1], mode="lines", fill="toself", fillcolor=fill,
                line=dict(color=self.colors.interface_stroke, width=2), name="interface",
            ),
            row=1, col=1,
        )

        history = record.to_frame()
        fig.add_trace(
            go.Scatter(
                x=history["iter"], y=history["J"], mode="lines+markers", name="J",
                line=dict(width=2.5, color=self.colors.chart_primary),
            ),
            row=1, col=2,
        )
        fig.add_trace(
            go.Scatter(
                x=history["iter"], y=history["grad_norm"], mode="lines+markers", name="|grad J|",
                line=dict(width=2.5, color=self.colors.chart_secondary),
            ),
            row=1, col=2,
        )

        fig.update_layout(
            plot_bgcolor=self.colors.card_background,
            paper_bgcolor=self.colors.card_background,
            font={'family': self.theme.typography.font_family, 'color': self.colors.text_primary},
            margin=dict(l=10, r=10, t=50, b=10),
            height=460,
            legend=dict(font={'size': 10, 'color': self.colors.text_muted}, orientation='h',
                        yanchor='bottom', y=1.05, xanchor='right', x=1),
        )
        fig.update_xaxes(self._axis(range=[0, 1], constrain="domain"), row=1, col=1)
        fig.update_yaxes(self._axis(range=[0, 1], scaleanchor="x", scaleratio=1), row=1, col=1)
        fig.update_xaxes(self._axis(title_text="iteration"), row=1, col=2)
        fig.update_yaxes(self._axis(type="log"), row=1, col=2)
        return fig


def write_report(
    path: Path,
    shape: RadialShape,
    case: CellCase,
    record: OptimizeRecord,
    tensor: EffectiveTensor,
    theme: Optional[Theme] = None,
) -> Path:
    """Write report.html with the figure and a tensor summary table."""
    theme = theme or get_theme()
    figure = ReportPlotBuilder(theme).build_figure(shape, case, record)
    summary = pd.DataFrame([
        {"entry": key, "value": value}
        for key, value in tensor.to_dict().items() if value is not None
    ])
    termination = record.termination.value if record.termination else "n/a"
    sections = [
        f'<div class="card">{figure.to_html(full_html=False, include_plotlyjs="cdn")}</div>',
        HTMLTableBuilder(theme).build_table(summary, "Effective tensor"),
    ]
    page = HTMLPageBuilder(theme).build_page(
        "Shape optimization report",
        sections,
        caption=f"{record.accepted_steps} accepted steps, termination: {termination}",
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(page)
    return path
