# Copyright 2026 JumpHJB Development Team.
#
# This file is part of JumpHJB, a toolkit for controlled jump-diffusions
# with recursive costs.
#
# JumpHJB is free software: you can redistribute it and/or modify it
# under the terms of the GNU Lesser General Public License (LGPL) as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# JumpHJB is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY
# or FITNESS FOR A PARTICULAR PURPOSE. See the GNU Lesser General
# Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public
# License along with JumpHJB. If not, see <http://www.gnu.org/licenses/>.

"""Result files and the run manifest.

Numbers are written with ``%.17g`` so that every double survives the
trip through text; CSV payloads carry no timestamps, so identical
inputs give byte-identical files. Timings and the creation time live
only in the manifest.

>>> format_value(0.1)
'0.10000000000000001'
>>> format_value(True)
'true'
"""

import csv
import hashlib
import json
import os
import time
from collections import OrderedDict

import numpy as np
from twisted.logger import Logger

from jumphjb import __version__
from jumphjb.util import stage_timings

log = Logger()


def format_value(value):
    """Render a cell of a CSV file."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if value is None:
        return ""
    return str(value)


def plain(value):
    """Convert numpy values nested in *value* to plain Python values."""
    if isinstance(value, dict):
        return OrderedDict((str(k), plain(v)) for k, v in value.items())
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_csv(path, header, rows):
    """Write *rows* under *header*. Rows are sequences or mappings
    keyed by the header names."""
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(name) for name in header]
            writer.writerow([format_value(v) for v in row])
    return path


def write_json(path, document):
    with open(path, "w") as stream:
        json.dump(plain(document), stream, indent=2)
        stream.write("\n")
    return path


def file_digest(path):
    """SHA-256 digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as stream:
        for block in iter(lambda: stream.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class RunManifest(object):
    """Provenance of a run: scenario digest, version, seed, stage
    timings and the digests of the files written."""

    def __init__(self, command, scenario, scenario_digest, seed,
                 threads=1):
        self.command = command
        self.scenario = scenario
        self.scenario_digest = scenario_digest
        self.seed = seed
        self.threads = threads
        self.outputs = []

    def add(self, path):
        self.outputs.append(path)
        return path

    def as_dict(self):
        document = OrderedDict()
        document["command"] = self.command
        document["scenario"] = self.scenario
        document["scenario_digest"] = self.scenario_digest
        document["version"] = __version__
        document["seed"] = self.seed
        document["threads"] = self.threads
        document["created"] = time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                            time.gmtime())
        document["timings"] = [OrderedDict([("stage", name),
                                            ("seconds", seconds)])
                               for name, seconds in stage_timings()]
        document["outputs"] = OrderedDict(
            (os.path.basename(path), file_digest(path))
            for path in self.outputs)
        return document

    def write(self, directory):
        path = os.path.join(directory, "manifest.json")
        write_json(path, self.as_dict())
        log.debug("manifest written to {path}", path=path)
        return path

    def verify(self, directory):
        """True if every recorded output still has its digest."""
        manifest_path = os.path.join(directory, "manifest.json")
        with open(manifest_path) as stream:
            outputs = json.load(stream)["outputs"]
        return all(file_digest(os.path.join(directory, name)) == digest
                   for name, digest in outputs.items())
