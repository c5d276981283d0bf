"""Print alpha(m, k), genus and piece counts for the compact tessellations."""

from conjplateau.closed_form import tessellation_params
from conjplateau.io import format_table

PAIRS = [(3, 3), (4, 3), (3, 4), (5, 3), (3, 5)] + [(2, k) for k in range(3, 8)]

rows = [tessellation_params(m, k).to_record() for m, k in PAIRS]
print(format_table(rows, ["m", "k", "alpha", "ell_target", "genus", "n_triangles", "n_pieces"]))
