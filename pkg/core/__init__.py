"""Numerical core: shapes, meshes, cell problems and shape calculus."""
