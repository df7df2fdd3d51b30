"""Services module: políticas de referencia, evaluación y comparación de resultados."""
