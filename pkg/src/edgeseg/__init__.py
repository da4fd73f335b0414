"""Edge-aware brain tumour segmentation pipeline on voxel grids."""

__version__ = "0.1.0"
