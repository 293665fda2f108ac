"""Themes package for result artifacts."""

from themes.base import (
    Theme,
    ThemeColors,
    ThemeTypography,
    get_theme,
    register_theme,
    PROFESSIONAL_THEME,
    DARK_THEME,
    OCEAN_THEME,
    THEMES,
)
from themes.html_builders import HTMLPageBuilder, HTMLTableBuilder

__all__ = [
    "Theme",
    "ThemeColors",
    "ThemeTypography",
    "get_theme",
    "register_theme",
    "PROFESSIONAL_THEME",
    "DARK_THEME",
    "OCEAN_THEME",
    "THEMES",
    "HTMLPageBuilder",
    "HTMLTableBuilder",
]
