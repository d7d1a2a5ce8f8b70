"""Detectors trained on rendered 3D models: a desk-scale study of what the renders must contain.

Modules: ``geometry`` (meshes), ``render`` (rasterizer), ``scene`` (labeled
datasets), ``patches`` (boxes and windows), ``features`` (extractors),
``classify`` (SVMs, NMS), ``evaluation`` (AP) and ``experiments`` (protocols).
"""
__version__ = "0.1.0"
