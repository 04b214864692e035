#
# Copyright 2026 py-umc authors
#
# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.
#
""" UMC1 single-file container

    offset 0    b"UMC1"                  magic
    offset 4    uint32 LE                format version
    offset 8    uint64 LE                header length H
    offset 16   H bytes UTF-8 JSON       {"tensors": {...}, "meta": {...}}
    offset 16+H payload                  raw little-endian arrays

    Tensor offsets are relative to the payload start.
"""
import os
import json
import struct
import logging

import numpy as np
import jsonschema

from pathlib import Path
from typing import Dict, Tuple, Union

from ..exceptions import FormatError, IntegrityError
from ..resources import load_schema

LOGGER = logging.getLogger('UMCLOG')

MAGIC = b'UMC1'
VERSION = 1

_PREAMBLE = struct.Struct('<4sIQ')

DTYPES = {
    'float32': np.dtype('<f4'),
    'float64': np.dtype('<f8'),
    'int64': np.dtype('<i8'),
    'uint8': np.dtype('u1'),
}

PathLike = Union[str, Path]


def _dtype_name(array: np.ndarray) -> str:
    name = array.dtype.name
    if name not in DTYPES:
        raise FormatError("Unsupported dtype '%s'" % name)
    return name


def encode(arrays: Dict[str, np.ndarray], meta: dict) -> bytes:
    """ Serialize named arrays and metadata
    """
    tensors = {}
    chunks = []
    offset = 0
    for name in sorted(arrays):
        array = np.asarray(arrays[name])
        dtype = _dtype_name(array)
        raw = np.ascontiguousarray(array, dtype=DTYPES[dtype]).tobytes()
        tensors[name] = { 'dtype': dtype, 'shape': list(array.shape), 'offset': offset, 'nbytes': len(raw) }
        chunks.append(raw)
        offset += len(raw)
    header = { 'tensors': tensors, 'meta': meta }
    jsonschema.validate(header, load_schema('container'))
    text = json.dumps(header, sort_keys=True, indent=1).encode('utf-8')
    return _PREAMBLE.pack(MAGIC, VERSION, len(text)) + text + b''.join(chunks)


def _check_layout(tensors: dict, payload_size: int) -> None:
    spans = []
    for name, info in tensors.items():
        itemsize = DTYPES[info['dtype']].itemsize
        expected = int(np.prod(info['shape'], dtype=np.int64)) * itemsize
        if info['nbytes'] != expected:
            raise IntegrityError("Tensor '%s': %d bytes declared for shape %s" % (name, info['nbytes'],
                                                                               info['shape']))
        start, end = info['offset'], info['offset'] + info['nbytes']
        if end > payload_size:
            raise IntegrityError("Tensor '%s' extends past the payload (truncated file?)" % name)
        if info['nbytes']:
            spans.append((start, end, name))
    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            raise IntegrityError("Tensors '%s' and '%s' overlap" % (n0, n1))


def decode(data: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
    """ Parse a container, nothing is returned unless every check passes
    """
    if len(data) < _PREAMBLE.size:
        raise FormatError("File too short for a UMC1 container")
    magic, version, header_len = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("Bad magic %r" % magic)
    if version != VERSION:
        raise FormatError("Unsupported container version %d" % version)
    start = _PREAMBLE.size
    if start + header_len > len(data):
        raise IntegrityError("Truncated header")
    try:
        header = json.loads(data[start:start + header_len].decode('utf-8'))
        jsonschema.validate(header, load_schema('container'))
    except (UnicodeDecodeError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise FormatError("Invalid container header: %s" % exc) from None

    payload = memoryview(data)[start + header_len:]
    tensors = header['tensors']
    _check_layout(tensors, len(payload))

    arrays = {}
    for name, info in tensors.items():
        dtype = DTYPES[info['dtype']]
        raw = payload[info['offset']:info['offset'] + info['nbytes']]
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(info['shape']).astype(dtype.newbyteorder('='))
    return arrays, header['meta']


def write_container(path: PathLike, arrays: Dict[str, np.ndarray], meta: dict) -> Path:
    """ Write atomically: readers never see a partial file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + '.tmp')
    tmp.write_bytes(encode(arrays, meta))
    os.replace(tmp, path)
    LOGGER.debug("Wrote %s (%d tensors)", path, len(arrays))
    return path


def read_container(path: PathLike) -> Tuple[Dict[str, np.ndarray], dict]:
    return decode(Path(path).read_bytes())


def read_meta(path: PathLike) -> dict:
    """ Return the metadata without materializing tensors
    """
    with Path(path).open('rb') as fh:
        preamble = fh.read(_PREAMBLE.size)
        if len(preamble) < _PREAMBLE.size:
            raise FormatError("File too short for a UMC1 container")
        magic, version, header_len = _PREAMBLE.unpack(preamble)
        if magic != MAGIC:
            raise FormatError("Bad magic %r" % magic)
        if version != VERSION:
            raise FormatError("Unsupported container version %d" % version)
        text = fh.read(header_len)
    if len(text) < header_len:
        raise IntegrityError("Truncated header")
    try:
        return json.loads(text.decode('utf-8'))['meta']
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise FormatError("Invalid container header: %s" % exc) from None
