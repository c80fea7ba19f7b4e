"""Conversion of results to plain JSON values."""

import numpy as np


def to_jsonable(obj):
    """Recursively turn arrays, numpy scalars and complex numbers into JSON values.

    Complex numbers become ``[re, im]`` pairs; objects with a ``to_json``
    method are converted through it.
    """
    if hasattr(obj, "to_json"):
        return to_jsonable(obj.to_json())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(obj.tolist())
        return obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
