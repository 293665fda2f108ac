"""
Theme system for result artifacts.

This module provides colour and typography settings shared by the static
SVG shape picture and the Plotly HTML report.
"""

from dataclasses import dataclass
from typing import Dict


@dataclass
class ThemeColors:
    """Color palette for a theme."""
    # Page
    background: str
    card_background: str
    border: str

    # Text colors
    text_primary: str
    text_secondary: str
    text_muted: str

    # Cell picture
    matrix_fill: str
    inclusion_fill: str
    hole_fill: str
    interface_stroke: str

    # Chart colors
    chart_primary: str
    chart_secondary: str
    chart_grid: str
    chart_axis: str


@dataclass
class ThemeTypography:
    """Typography settings for a theme."""
    font_family: str
    title_size: str
    body_size: str
    caption_size: str


@dataclass
class Theme:
    """Complete theme configuration."""
    name: str
    colors: ThemeColors
    typography: ThemeTypography
    stroke_width: float = 0.004


_TYPOGRAPHY = ThemeTypography(
    font_family="Arial, sans-serif",
    title_size="16px",
    body_size="13px",
    caption_size="12px",
)


# Default theme, close to the printed figures: grey matrix, dark inclusion
PROFESSIONAL_THEME = Theme(
    name="professional",
    colors=ThemeColors(
        background="#f9fafb",
        card_background="white",
        border="#e5e7eb",
        text_primary="#111827",
        text_secondary="#374151",
        text_muted="#6b7280",
        matrix_fill="#e5e7eb",
        inclusion_fill="#374151",
        hole_fill="white",
        interface_stroke="#111827",
        chart_primary="#3b82f6",
        chart_secondary="#ef4444",
        chart_grid="#f3f4f6",
        chart_axis="#e5e7eb",
    ),
    typography=_TYPOGRAPHY,
)


DARK_THEME = Theme(
    name="dark",
    colors=ThemeColors(
        background="#0f172a",
        card_background="#1e293b",
        border="#334155",
        text_primary="#f1f5f9",
        text_secondary="#cbd5e1",
        text_muted="#94a3b8",
        matrix_fill="#334155",
        inclusion_fill="#60a5fa",
        hole_fill="#0f172a",
        interface_stroke="#f1f5f9",
        chart_primary="#60a5fa",
        chart_secondary="#f87171",
        chart_grid="#334155",
        chart_axis="#475569",
    ),
    typography=_TYPOGRAPHY,
)


# Ocean theme - blue/teal color scheme
OCEAN_THEME = Theme(
    name="ocean",
    colors=ThemeColors(
        background="#f0f9ff",
        card_background="#ffffff",
        border="#bae6fd",
        text_primary="#0c4a6e",
        text_secondary="#075985",
        text_muted="#0891b2",
        matrix_fill="#e0f2fe",
        inclusion_fill="#0ea5e9",
        hole_fill="#ffffff",
        interface_stroke="#0c4a6e",
        chart_primary="#0ea5e9",
        chart_secondary="#f43f5e",
        chart_grid="#e0f2fe",
        chart_axis="#bae6fd",
    ),
    typography=_TYPOGRAPHY,
)


# Registry of available themes
THEMES: Dict[str, Theme] = {
    "professional": PROFESSIONAL_THEME,
    "dark": DARK_THEME,
    "ocean": OCEAN_THEME,
}


def get_theme(name: str = "professional") -> Theme:
    """
    Get a theme by name.

    Args:
        name: Theme name (default: "professional")

    Returns:
        Theme configuration

    Raises:
        ValueError: If theme name is not found
    """
    if name not in THEMES:
        raise ValueError(f"Theme '{name}' not found. Available themes: {list(THEMES.keys())}")
    return THEMES[name]


def register_theme(theme: Theme) -> None:
    """
    Register a custom theme.

    Args:
        theme: Theme configuration to register
    """
    THEMES[theme.name] = theme
