"""Medical code tables serialized into one natural-language line per code."""
import csv
import re
from dataclasses import dataclass

import numpy as np

from .errors import OntologyParseError

SYSTEMS = ("ICD-diagnosis", "ICD-procedure", "CPT", "medication")
DEFAULT_TEMPLATE = "{system} version {version} code {code}: {description}"
PLACEHOLDERS = ("system", "version", "code", "description")

# (low, high, label) over the numeric part of ICD-9-CM diagnosis codes
ICD9_CHAPTERS = (
    (1, 139, "infectious and parasitic diseases"),
    (140, 239, "neoplasms"),
    (240, 279, "endocrine, nutritional and metabolic diseases, and immunity disorders"),
    (280, 289, "diseases of the blood and blood-forming organs"),
    (290, 319, "mental disorders"),
    (320, 389, "diseases of the nervous system and sense organs"),
    (390, 459, "diseases of the circulatory system"),
    (460, 519, "diseases of the respiratory system"),
    (520, 579, "diseases of the digestive system"),
    (580, 629, "diseases of the genitourinary system"),
    (630, 679, "complications of pregnancy, childbirth, and the puerperium"),
    (680, 709, "diseases of the skin and subcutaneous tissue"),
    (710, 739, "diseases of the musculoskeletal system and connective tissue"),
    (740, 759, "congenital anomalies"),
    (760, 779, "certain conditions originating in the perinatal period"),
    (780, 799, "symptoms, signs, and ill-defined conditions"),
    (800, 999, "injury and poisoning"),
)
ICD9_V_LABEL = "supplementary classification of factors influencing health status"
ICD9_E_LABEL = "supplementary classification of external causes of injury and poisoning"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class MedicalCode:
    system: str
    version: str
    code: str
    description: str
    chapter: str = ""

    @property
    def key(self):
        return (self.system, self.version, self.code)


class SerializationTemplate:
    """Pattern with each of ``{system} {version} {code} {description}`` exactly once."""

    def __init__(self, pattern=DEFAULT_TEMPLATE):
        for name in PLACEHOLDERS:
            if pattern.count("{" + name + "}") != 1:
                raise ValueError(f"template must contain {{{name}}} exactly once: {pattern!r}")
        self.pattern = pattern
        regex, pos = "", 0
        for m in re.finditer(r"\{(\w+)\}", pattern):
            regex += re.escape(pattern[pos:m.start()])
            name = m.group(1)
            if name == "system":
                regex += "(?P<system>" + "|".join(re.escape(s) for s in SYSTEMS) + ")"
            elif name in ("version", "code"):
                regex += rf"(?P<{name}>\S+?)"
            elif name == "description":
                regex += r"(?P<description>\S(?:.*\S)?)"
            else:
                raise ValueError(f"unknown placeholder {{{name}}}")
            pos = m.end()
        regex += re.escape(pattern[pos:])
        self._regex = re.compile(regex, re.DOTALL)

    def format(self, code):
        return self.pattern.format(system=code.system, version=code.version,
                                   code=code.code, description=code.description)


def _validate_row(row, lineno):
    system, version, code, description = row[:4]
    if not code:
        raise OntologyParseError(f"line {lineno}: empty code")
    if not description:
        raise OntologyParseError(f"line {lineno}: empty description")
    if system not in SYSTEMS:
        raise OntologyParseError(f"line {lineno}: unknown system {system!r}; expected one of {SYSTEMS}")
    for name, value in (("version", version), ("code", code)):
        if not value or any(ch.isspace() for ch in value):
            raise OntologyParseError(f"line {lineno}: {name} {value!r} must be a non-empty word")


def parse_code_table(path, delimiter=","):
    """Read ``system,version,code,description[,chapter]`` rows into :class:`MedicalCode`."""
    codes, seen, dupes = [], {}, []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise OntologyParseError(f"{path}: missing header row")
        header = [h.strip().lower() for h in header]
        if header[:4] != list(PLACEHOLDERS) or header[4:] not in ([], ["chapter"]):
            raise OntologyParseError(
                f"{path}: header must be system,version,code,description[,chapter], got {header}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise OntologyParseError(
                    f"line {lineno}: expected {len(header)} fields, found {len(row)}")
            row = [c.strip() for c in row]
            _validate_row(row, lineno)
            code = MedicalCode(*row[:4], chapter=row[4] if len(row) > 4 else "")
            if code.key in seen:
                dupes.append((code.key, seen[code.key], lineno))
            else:
                seen[code.key] = lineno
            codes.append(code)
    if dupes:
        listing = "; ".join(f"{'/'.join(k)} (lines {a} and {b})" for k, a, b in dupes)
        raise OntologyParseError(f"{path}: duplicate keys: {listing}")
    return codes


def serialize(code, template=None):
    return (template or SerializationTemplate()).format(code)


def deserialize_code_key(serialized, template=None):
    """Recover ``(system, version, code)``; matching is exact, no trimming."""
    m = (template or SerializationTemplate())._regex.fullmatch(serialized)
    if m is None:
        raise OntologyParseError(f"not a serialized code line: {serialized[:80]!r}")
    return m.group("system"), m.group("version"), m.group("code")


def _icd9_bucket(code):
    c = code.strip().upper()
    if c.startswith("V"):
        return ICD9_V_LABEL
    if c.startswith("E"):
        return ICD9_E_LABEL
    m = re.match(r"^(\d{1,3})(?:\.\d*)?$", c)
    if not m:
        return UNKNOWN
    n = int(m.group(1))
    for low, high, label in ICD9_CHAPTERS:
        if low <= n <= high:
            return label
    return UNKNOWN


def chapter_of(code):
    """Chapter label of an ICD diagnosis code.

    ICD-9 codes are bucketed by the classical chapter ranges (V and E codes
    go to the two supplementary classifications); other versions pass the
    table's chapter column through.
    """
    if code.system != "ICD-diagnosis":
        raise ValueError(f"chapter_of needs an ICD-diagnosis code, got {code.system}")
    if code.version == "9":
        return _icd9_bucket(code.code)
    return code.chapter or UNKNOWN


def build_ontology_corpus(codes, template=None, seed=0):
    """One serialized line per code, in a seed-determined shuffled order."""
    template = template or SerializationTemplate()
    lines = [template.format(c) for c in codes]
    order = np.random.default_rng(seed).permutation(len(lines))
    return [lines[i] for i in order]


def write_corpus(lines, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def read_corpus(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]
