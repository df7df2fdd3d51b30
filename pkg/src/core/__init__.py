"""Core module: grafo de patrullaje, simulador, creencias, observaciones y configuración."""
