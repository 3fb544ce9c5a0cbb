"""Scale-aware segmentation, clustering and annotation of geometric textures
on closed triangle meshes."""

__version__ = "0.1.0"
