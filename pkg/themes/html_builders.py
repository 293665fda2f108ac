"""
HTML Builders for themed report pages.

This module provides builders for the standalone HTML report written next
to the results file, separating HTML generation from the plotting logic.
"""

from html import escape
from typing import List

import pandas as pd

from themes.base import Theme


class HTMLTableBuilder:
    """
    Builds themed HTML tables.
    """

    def __init__(self, theme: Theme):
        """
        Initialize HTML table builder with a theme.

        Args:
            theme: Theme configuration
        """
        self.theme = theme
        self.colors = theme.colors
        self.typography = theme.typography

    def build_table(self, df: pd.DataFrame, title: str, float_format: str = "{:.10g}") -> str:
        """
        Build a themed HTML table.

        Args:
            df: DataFrame to render
            title: Table title
            float_format: Format applied to float cells

        Returns:
            HTML string for table
        """
        def cell(value) -> str:
            if isinstance(value, float):
                return float_format.format(value)
            return escape(str(value))

        headers = ''.join(
            f'<th style="text-align: left; padding: 8px 12px; color: {self.colors.text_secondary};">{escape(str(col))}</th>'
            for col in df.columns
        )
        rows = ''.join(
            f'<tr style="border-bottom: 1px solid {self.colors.border};">' +
            ''.join(f'<td style="padding: 6px 12px; color: {self.colors.text_primary};">{cell(val)}</td>' for val in row) +
            '</tr>'
            for row in df.itertuples(index=False)
        )
        return f'''<div class="card">
<div class="card-title">{escape(title)}</div>
<table style="border-collapse: collapse; font-size: {self.typography.body_size};">
<thead><tr style="border-bottom: 2px solid {self.colors.border};">{headers}</tr></thead>
<tbody>{rows}</tbody>
</table>
</div>'''


class HTMLPageBuilder:
    """
    Wraps report sections into one themed page.
    """

    def __init__(self, theme: Theme):
        self.theme = theme
        self.colors = theme.colors
        self.typography = theme.typography

    def build_css(self) -> str:
        return f"""<style>
body {{ background: {self.colors.background}; font-family: {self.typography.font_family};
       color: {self.colors.text_primary}; margin: 2rem; }}
h1 {{ font-size: 22px; }}
.card {{ background: {self.colors.card_background}; border: 1px solid {self.colors.border};
        border-radius: 8px; padding: 16px; margin-bottom: 16px; }}
.card-title {{ font-size: {self.typography.title_size}; font-weight: 600; margin-bottom: 12px; }}
.caption {{ font-size: {self.typography.caption_size}; color: {self.colors.text_muted}; }}
</style>"""

    def build_page(self, title: str, sections: List[str], caption: str = "") -> str:
        """
        Build a complete HTML document.

        Args:
            title: Page heading
            sections: Pre-rendered HTML fragments, in order
            caption: Optional line under the heading
        """
        body = "\n".join(sections)
        caption_html = f'<div class="caption">{escape(caption)}</div>' if caption else ""
        return f"""<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>{escape(title)}</title>
{self.build_css()}
</head><body>
<h1>{escape(title)}</h1>
{caption_html}
{body}
</body></html>
"""
