from .exporter import ExportError, ExportJob, export_embeddings, read_articles

__version__ = "0.1.0"

__all__ = ["ExportError", "ExportJob", "export_embeddings", "read_articles"]
