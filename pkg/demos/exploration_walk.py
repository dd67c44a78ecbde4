"""
Breadth-first exploration walk
==============================

Build a random graph on a handful of blocks by breadth-first exploration,
and check that the excursions of the reflected walk recover the components
and their surplus edges.
"""

import numpy as np

from critmc.exploration import bfs_walk_build, extract_excursions, reflect

masses = np.array([0.9, 0.7, 0.5, 0.4, 0.3, 0.2, 0.1])
res = bfs_walk_build(masses, q=0.6, seed=4)

print("components (mass, surplus):", [(round(m, 3), s) for m, s in res.components.pairs()])
for e in extract_excursions(reflect(res.walk), res.marks):
    print(f"excursion [{e.start:.3f}, {e.end:.3f}]  length {e.length:.3f}  marks {e.marks}")
