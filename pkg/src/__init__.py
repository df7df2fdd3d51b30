"""
MAGEC Patrol - Patrullaje multiagente sobre grafos con GNN y MAPPO
"""

__version__ = "1.0.0"
