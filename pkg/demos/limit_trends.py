"""Heights and normals of the (2, 3) family as H shrinks, and the distance to the H-sphere as H grows."""

from conjplateau.assembly import limit_checks
from conjplateau.io import format_table

small = limit_checks([0.2, 0.1, 0.05], 2, 3, n=32)
large = limit_checks([0.40, 0.45, 0.48], 2, 3, n=32)
print(format_table(small["rows"], ["H", "ell_tilde", "max_height", "rms_nu_plus_1"]))
print()
print(format_table(large["rows"], ["H", "ell_tilde", "sphere_distance", "sphere_height0"]))
