"""
Code tables as sentences
========================

Each row of a code table becomes one line of text; the code key can be
read back from the line, and ICD-9 codes are grouped into chapters.
"""
import collections
import os
import tempfile

from cmbert.ontology import (build_ontology_corpus, chapter_of, deserialize_code_key,
                             parse_code_table)
from cmbert.synthetic import icd9_table_rows, write_code_table

path = os.path.join(tempfile.mkdtemp(), "icd9.csv")
write_code_table(path, icd9_table_rows())
codes = parse_code_table(path)
lines = build_ontology_corpus(codes, seed=0)
for line in lines[:4]:
    print(line)

assert {deserialize_code_key(line) for line in lines} == {c.key for c in codes}

chapters = collections.Counter(chapter_of(c) for c in codes)
for label, n in chapters.most_common():
    print(f"{n:3d}  {label}")
