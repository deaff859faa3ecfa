"""Small synthetic clinical-style corpora for desk-scale runs.

Sentences are drawn from a handful of templates over a fixed set of
medications, diagnoses (with ICD-9 codes) and procedures. Attributes are
tied to their entity (a drug always comes with the same dose, route and
indication), so most masked tokens are recoverable from context.
"""
import numpy as np

# name, dose, unit, route, frequency, indication
MEDICATIONS = [
    ("metformin", "500", "mg", "oral", "twice daily", "type 2 diabetes"),
    ("lisinopril", "10", "mg", "oral", "daily", "hypertension"),
    ("atorvastatin", "40", "mg", "oral", "nightly", "hyperlipidemia"),
    ("aspirin", "81", "mg", "oral", "daily", "coronary artery disease"),
    ("warfarin", "5", "mg", "oral", "daily", "atrial fibrillation"),
    ("heparin", "5000", "units", "subcutaneous", "every eight hours", "thromboprophylaxis"),
    ("insulin glargine", "20", "units", "subcutaneous", "nightly", "type 1 diabetes"),
    ("furosemide", "40", "mg", "intravenous", "twice daily", "volume overload"),
    ("vancomycin", "1250", "mg", "intravenous", "every twelve hours", "mrsa bacteremia"),
    ("ceftriaxone", "2", "g", "intravenous", "daily", "community acquired pneumonia"),
    ("piperacillin tazobactam", "4.5", "g", "intravenous", "every six hours", "sepsis"),
    ("levothyroxine", "75", "mcg", "oral", "every morning", "hypothyroidism"),
    ("omeprazole", "20", "mg", "oral", "daily", "gastroesophageal reflux"),
    ("pantoprazole", "40", "mg", "intravenous", "daily", "upper gastrointestinal bleed"),
    ("metoprolol", "25", "mg", "oral", "twice daily", "rate control"),
    ("amlodipine", "5", "mg", "oral", "daily", "essential hypertension"),
    ("prednisone", "40", "mg", "oral", "daily", "copd exacerbation"),
    ("albuterol", "2.5", "mg", "nebulized", "every four hours", "bronchospasm"),
    ("acetaminophen", "650", "mg", "oral", "every six hours", "fever"),
    ("oxycodone", "5", "mg", "oral", "every four hours", "postoperative pain"),
    ("morphine", "2", "mg", "intravenous", "every three hours", "severe pain"),
    ("ondansetron", "4", "mg", "intravenous", "every eight hours", "nausea"),
    ("lorazepam", "1", "mg", "intravenous", "once", "seizure"),
    ("levetiracetam", "750", "mg", "oral", "twice daily", "epilepsy"),
    ("sertraline", "50", "mg", "oral", "daily", "major depression"),
    ("quetiapine", "25", "mg", "oral", "nightly", "delirium"),
    ("apixaban", "2.5", "mg", "oral", "twice daily", "deep vein thrombosis"),
    ("clopidogrel", "75", "mg", "oral", "daily", "coronary stent"),
    ("gabapentin", "300", "mg", "oral", "three times daily", "neuropathic pain"),
    ("tamsulosin", "0.4", "mg", "oral", "daily", "benign prostatic hyperplasia"),
    ("allopurinol", "100", "mg", "oral", "daily", "gout"),
    ("spironolactone", "25", "mg", "oral", "daily", "cirrhotic ascites"),
    ("lactulose", "30", "ml", "oral", "three times daily", "hepatic encephalopathy"),
    ("rifaximin", "550", "mg", "oral", "twice daily", "encephalopathy prophylaxis"),
    ("nitroglycerin", "0.4", "mg", "sublingual", "as needed", "angina"),
    ("digoxin", "0.125", "mg", "oral", "daily", "heart failure"),
]

# ICD-9 code, description, chapter
DIAGNOSES = [
    ("250.00", "diabetes mellitus without complication", "endocrine"),
    ("401.9", "unspecified essential hypertension", "circulatory"),
    ("272.4", "other and unspecified hyperlipidemia", "endocrine"),
    ("414.01", "coronary atherosclerosis of native coronary artery", "circulatory"),
    ("427.31", "atrial fibrillation", "circulatory"),
    ("428.0", "congestive heart failure unspecified", "circulatory"),
    ("486", "pneumonia organism unspecified", "respiratory"),
    ("491.21", "obstructive chronic bronchitis with acute exacerbation", "respiratory"),
    ("493.90", "asthma unspecified", "respiratory"),
    ("038.9", "unspecified septicemia", "infectious"),
    ("008.45", "intestinal infection due to clostridium difficile", "infectious"),
    ("042", "human immunodeficiency virus disease", "infectious"),
    ("162.9", "malignant neoplasm of bronchus and lung unspecified", "neoplasms"),
    ("174.9", "malignant neoplasm of breast unspecified", "neoplasms"),
    ("185", "malignant neoplasm of prostate", "neoplasms"),
    ("153.9", "malignant neoplasm of colon unspecified", "neoplasms"),
    ("345.90", "epilepsy unspecified without intractable epilepsy", "nervous"),
    ("332.0", "paralysis agitans", "nervous"),
    ("331.0", "alzheimers disease", "nervous"),
    ("296.20", "major depressive disorder single episode unspecified", "mental"),
    ("303.90", "other and unspecified alcohol dependence", "mental"),
    ("571.5", "cirrhosis of liver without mention of alcohol", "digestive"),
    ("530.81", "esophageal reflux", "digestive"),
    ("578.9", "hemorrhage of gastrointestinal tract unspecified", "digestive"),
    ("584.9", "acute kidney failure unspecified", "genitourinary"),
    ("599.0", "urinary tract infection site not specified", "genitourinary"),
    ("600.00", "hypertrophy of prostate without urinary obstruction", "genitourinary"),
    ("285.9", "anemia unspecified", "blood"),
    ("287.5", "thrombocytopenia unspecified", "blood"),
    ("707.03", "pressure ulcer lower back", "skin"),
    ("682.6", "cellulitis and abscess of leg", "skin"),
    ("715.90", "osteoarthrosis unspecified site", "musculoskeletal"),
    ("274.9", "gout unspecified", "endocrine"),
    ("820.8", "closed fracture of neck of femur", "injury"),
    ("850.9", "concussion unspecified", "injury"),
    ("745.4", "ventricular septal defect", "congenital"),
]

# name, CPT code
PROCEDURES = [
    ("colonoscopy", "45378"), ("upper endoscopy", "43235"), ("cardiac catheterization", "93458"),
    ("coronary stent placement", "92928"), ("chest radiograph", "71045"),
    ("computed tomography of the head", "70450"), ("transthoracic echocardiogram", "93306"),
    ("lumbar puncture", "62270"), ("paracentesis", "49083"), ("thoracentesis", "32555"),
    ("central venous catheter insertion", "36556"), ("hemodialysis", "90935"),
    ("total knee arthroplasty", "27447"), ("laparoscopic cholecystectomy", "47562"),
    ("appendectomy", "44950"), ("bronchoscopy", "31622"),
]

SEXES = ("male", "female")
TEMPLATES = (
    "patient with {dx} icd-9 {code} was started on {drug} {dose} {unit} {route} {freq}",
    "{drug} {dose} {unit} {route} {freq} for {indication}",
    "discharge diagnosis {dx} coded as {code}",
    "{sex} patient underwent {proc} cpt {cpt} without complication",
    "continue {drug} {dose} {unit} {freq} and {drug2} {dose2} {unit2} {freq2}",
    "history notable for {dx} and {dx2} on {drug}",
    "assessment {dx} plan {proc} and {drug} for {indication}",
)


def _fill(template, rng):
    med = MEDICATIONS[rng.integers(len(MEDICATIONS))]
    med2 = MEDICATIONS[rng.integers(len(MEDICATIONS))]
    dx = DIAGNOSES[rng.integers(len(DIAGNOSES))]
    dx2 = DIAGNOSES[rng.integers(len(DIAGNOSES))]
    proc = PROCEDURES[rng.integers(len(PROCEDURES))]
    return template.format(
        drug=med[0], dose=med[1], unit=med[2], route=med[3], freq=med[4], indication=med[5],
        drug2=med2[0], dose2=med2[1], unit2=med2[2], freq2=med2[4],
        dx=dx[1], code=dx[0], dx2=dx2[1], proc=proc[0], cpt=proc[1],
        sex=SEXES[rng.integers(2)])


def clinical_sentences(n, seed=0, unique=True, return_templates=False):
    """``n`` synthetic sentences; with ``unique`` no sentence repeats.

    With ``return_templates`` the index of each sentence's template is
    returned as well.
    """
    rng = np.random.default_rng(seed)
    out, seen, kinds = [], set(), []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 100 * n + 1000:
            raise RuntimeError("could not generate enough distinct sentences")
        kind = int(rng.integers(len(TEMPLATES)))
        s = _fill(TEMPLATES[kind], rng)
        if unique and s in seen:
            continue
        seen.add(s)
        out.append(s)
        kinds.append(kind)
    return (out, kinds) if return_templates else out


def priority_lexicon():
    """Medication names, codes and procedure names: the terms favoured by masking."""
    terms = []
    for med in MEDICATIONS:
        terms.extend(med[0].split())
    for code, desc, _ in DIAGNOSES:
        terms.append(code)
    for name, cpt in PROCEDURES:
        terms.extend(name.split())
        terms.append(cpt)
    return sorted(set(terms))


def clinical_tokens():
    """Code strings added verbatim to the tokenizer vocabulary."""
    return [code for code, _, _ in DIAGNOSES] + [cpt for _, cpt in PROCEDURES]


def icd9_table_rows():
    """``(system, version, code, description, chapter)`` rows of the ICD-9 fixture."""
    return [("ICD-diagnosis", "9", code, desc, chapter) for code, desc, chapter in DIAGNOSES]


def write_code_table(path, rows):
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", "version", "code", "description", "chapter"])
        w.writerows(rows)


def random_token_corpus(n_sequences, length, vocab_size, n_special, seed=0):
    """I.i.d. uniform token sequences, wrapped in ``[CLS] ... [SEP]`` ids 2 and 3."""
    rng = np.random.default_rng(seed)
    body = rng.integers(n_special, vocab_size, size=(n_sequences, length))
    return [[2] + row.tolist() + [3] for row in body]
