"""lumifield: fit an implicit surface + view-dependent radiance field to posed
images, export a textured mesh, and re-render it in real time on the CPU."""

__version__ = "0.1.0"
