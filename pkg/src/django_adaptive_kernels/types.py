from typing import Annotated, Tuple

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

# Lattice level `s` of the bandwidth `e^{-s-2}`
Level = Annotated[int, "level"]
Levels = Tuple[int, ...]

# Index of a dyadic partition cell, one integer per axis
CellIndex = Tuple[int, ...]

# Real number that may be `math.inf` (norm indices, p)
ExtendedReal = Annotated[float, "extended_real"]
