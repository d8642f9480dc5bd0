from typing import Any

import numpy as np
from pydantic import GetJsonSchemaHandler
from pydantic.json_schema import JsonSchemaValue
from pydantic_core import core_schema


class NDArray(np.ndarray):
    """Read-only float64 array usable as a pydantic field type.

    Accepts anything ``np.array`` accepts, serializes to nested lists.
    """

    dtype_: Any = np.float64

    @classmethod
    def validate(cls, v: Any) -> np.ndarray:
        try:
            arr = np.array(v, dtype=cls.dtype_)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"Cannot convert value to a {np.dtype(cls.dtype_).name} array") from exc
        arr.flags.writeable = False
        return arr

    @classmethod
    def __get_pydantic_core_schema__(
        cls, source_type: Any, handler: GetJsonSchemaHandler
    ) -> core_schema.CoreSchema:
        return core_schema.no_info_plain_validator_function(
            cls.validate,
            serialization=core_schema.plain_serializer_function_ser_schema(
                lambda x: np.asarray(x).tolist()
            ),
        )

    @classmethod
    def __get_pydantic_json_schema__(
        cls, schema: core_schema.CoreSchema, handler: GetJsonSchemaHandler
    ) -> JsonSchemaValue:
        return {"type": "array"}


class IndexArray(NDArray):
    dtype_ = np.int64
