"""regrag: retrieval-augmented generation over regulatory documents.

Naive retrieval and graph-based retrieval (knowledge graph, community
hierarchy, global/local search) behind one engine, with deterministic stub
backends so the whole pipeline runs and verifies offline.
"""

__version__ = "0.1.0"
