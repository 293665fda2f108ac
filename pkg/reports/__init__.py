"""Result files, SVG pictures and HTML reports."""
