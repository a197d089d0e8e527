"""Regenerates the bundled fixtures: python3 generate.py (from this directory)."""
import json
import random

rng = random.Random(20240611)

TERMS = [
    "Acute appendicitis", "Acute bronchitis", "Acute cholecystitis", "Acute gastroenteritis",
    "Acute myocardial infarction", "Acute pancreatitis", "Allergic rhinitis", "Anemia due to iron deficiency",
    "Ankylosing spondylitis", "Asthma", "Atrial fibrillation", "Benign paroxysmal positional vertigo",
    "Bell palsy", "Carpal tunnel syndrome", "Cellulitis", "Chronic kidney disease",
    "Chronic obstructive pulmonary disease", "Cluster headache", "Community-acquired pneumonia", "Contact dermatitis",
    "Crohn disease", "Cystitis", "Deep vein thrombosis", "Diabetic ketoacidosis",
    "Diverticulitis", "Essential hypertension", "Gastroesophageal reflux disease", "Gout",
    "Graves disease", "Heart failure", "Herpes zoster", "Hypothyroidism",
    "Infectious mononucleosis", "Influenza", "Irritable bowel syndrome", "Kidney stone",
    "Lumbar disc herniation", "Migraine", "Multiple sclerosis", "Osteoarthritis of knee",
    "Otitis media", "Parkinson disease", "Peptic ulcer", "Pulmonary embolism",
    "Pulmonary tuberculosis", "Pyelonephritis", "Rheumatoid arthritis", "Sinusitis",
    "Streptococcal pharyngitis", "Systemic lupus erythematosus", "Tension-type headache", "Type 2 diabetes mellitus",
    "Ulcerative colitis", "Urticaria", "Viral conjunctivitis", "Viral hepatitis B",
]

CASES = [
    ("fever, productive cough and crackles over the right lower lung", "Community-acquired pneumonia",
     "focal crackles with fever and productive cough point to lobar consolidation"),
    ("episodic wheeze triggered by cold air, relieved by inhaled bronchodilator", "Asthma",
     "reversible wheeze with triggers is typical of airway hyperreactivity"),
    ("crushing chest pain for one hour with ST elevation in leads II, III and aVF", "Acute myocardial infarction",
     "ST elevation in contiguous inferior leads with ischemic pain"),
    ("right lower quadrant pain that began around the umbilicus, with rebound tenderness", "Acute appendicitis",
     "periumbilical pain migrating to McBurney point with peritonism"),
    ("sudden pleuritic chest pain and dyspnea after a long flight, with a swollen calf", "Pulmonary embolism",
     "immobility, unilateral leg swelling and acute dyspnea"),
    ("burning epigastric pain relieved by meals and black stools", "Peptic ulcer",
     "pain related to meals with melena suggests a bleeding ulcer"),
    ("unilateral throbbing headache with nausea and photophobia lasting a day", "Migraine",
     "recurrent unilateral pulsatile headache with photophobia"),
    ("a painful, red, swollen first metatarsophalangeal joint overnight", "Gout",
     "acute monoarthritis of the big toe is classic for urate crystals"),
    ("dysuria, frequency and suprapubic discomfort without fever", "Cystitis",
     "lower urinary symptoms without systemic signs"),
    ("fever, flank pain and costovertebral angle tenderness with pyuria", "Pyelonephritis",
     "upper tract signs with fever and pyuria"),
    ("weight gain, cold intolerance, constipation and a raised TSH", "Hypothyroidism",
     "hypometabolic symptoms with high TSH"),
    ("tremor, weight loss, exophthalmos and a suppressed TSH", "Graves disease",
     "thyrotoxicosis with eye signs"),
    ("polyuria, polydipsia, vomiting, deep breathing and ketones in urine", "Diabetic ketoacidosis",
     "hyperglycemia with ketosis and Kussmaul breathing"),
    ("colicky loin-to-groin pain with microscopic hematuria", "Kidney stone",
     "renal colic radiating to the groin with hematuria"),
    ("irregularly irregular pulse and palpitations with no P waves on ECG", "Atrial fibrillation",
     "absent P waves with irregular rhythm"),
    ("exertional dyspnea, orthopnea and bilateral ankle edema", "Heart failure",
     "congestion with orthopnea and edema"),
    ("a dermatomal band of painful vesicles on the left chest", "Herpes zoster",
     "dermatomal vesicular eruption"),
    ("sore throat, fever, tonsillar exudate and no cough", "Streptococcal pharyngitis",
     "Centor features without cough"),
    ("morning stiffness over an hour and symmetric swelling of the small hand joints", "Rheumatoid arthritis",
     "symmetric small-joint inflammatory arthritis"),
    ("a malar rash, joint pain and a positive anti-dsDNA test", "Systemic lupus erythematosus",
     "photosensitive rash with arthralgia and specific antibodies"),
    ("vertigo lasting under a minute when turning over in bed", "Benign paroxysmal positional vertigo",
     "brief positional vertigo"),
    ("sudden weakness of one side of the face including the forehead", "Bell palsy",
     "lower motor neuron facial weakness involving the forehead"),
    ("night-time tingling in the thumb, index and middle fingers", "Carpal tunnel syndrome",
     "median nerve distribution paresthesia worse at night"),
    ("bloody diarrhea with tenesmus and continuous mucosal inflammation from the rectum", "Ulcerative colitis",
     "continuous colitis starting in the rectum"),
    ("resting tremor, slowness of movement and cogwheel rigidity", "Parkinson disease",
     "the triad of rest tremor, bradykinesia and rigidity"),
]

PHI_NAMES = ["Zhang Wei", "Li Na", "Wang Fang", "Liu Yang", "Chen Jie", "Zhao Lei", "Huang Min", "Zhou Tao"]
CITIES = ["Beijing", "Shanghai", "Chengdu", "Wuhan", "Hangzhou", "Guangzhou"]
HOSPITALS = ["Peking Union Hospital", "Huashan Hospital", "West China Hospital", "Tongji Medical Center"]
DEPARTMENTS = ["respiratory", "cardiology", "gastroenterology", "neurology", "endocrinology", "urology", "dermatology", "rheumatology"]


def write_jsonl(path, records):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n")


def seeds():
    out = []
    for i, (finding, answer, rationale) in enumerate(CASES, start=1):
        age = rng.randint(18, 80)
        sex = rng.choice(["man", "woman"])
        distractors = rng.sample([t for t in TERMS if t != answer], 3)
        options = distractors + [answer]
        rng.shuffle(options)
        labels = "ABCD"
        out.append({
            "id": f"seed-{i:02d}",
            "source": "synthetic",
            "stem": f"A {age}-year-old {sex} presents with {finding}. Which of the following is the most likely diagnosis?",
            "options": {labels[j]: t for j, t in enumerate(options)},
            "correct_label": labels[options.index(answer)],
            "ground_truth": rationale,
        })
    write_jsonl("seeds.jsonl", out)


SYMPTOMS = [
    "a dry cough", "chest tightness", "a pounding headache", "lower back pain", "burning when I pass urine",
    "an itchy rash on both arms", "swollen ankles", "a racing heartbeat", "dizziness when standing",
    "stomach cramps after eating", "a sore throat", "numb fingers", "blurred vision", "knee pain on stairs",
    "night sweats", "blood in my stool", "constant thirst", "a painful big toe", "ringing in my ears",
    "shortness of breath", "heartburn at night", "a stiff neck", "pain behind my eyes", "trouble sleeping",
    "swollen glands in my neck",
]
DURATIONS = ["since yesterday", "for two weeks", "for about a month", "on and off for a year", "since last Monday"]
EXTRAS = [
    "and it gets worse in the evening", "after I started a new job", "even though I rest a lot",
    "and painkillers do not help", "together with a mild fever", "mostly in the morning",
]


def dialogues():
    out = []
    complaints = []
    for i in range(1, 101):
        if i % 12 == 0 and complaints:
            # Near-repeat of an earlier complaint with one word changed.
            base = complaints[rng.randrange(len(complaints))]
            complaint = base.replace("I have had", "I've had") if "I have had" in base else base + " too"
        else:
            complaint = f"I have had {rng.choice(SYMPTOMS)} {rng.choice(DURATIONS)} {rng.choice(EXTRAS)}."
        complaints.append(complaint)
        name = rng.choice(PHI_NAMES)
        city = rng.choice(CITIES)
        hospital = rng.choice(HOSPITALS)
        turns = [
            {"speaker": "doctor", "text": f"Good morning {name}, what brings you in today?"},
            {"speaker": "patient", "text": complaint},
            {"speaker": "doctor", "text": "Have you seen anyone else about this?"},
            {"speaker": "patient", "text": f"Only a clinic at {hospital} in {city}. You can call me on 138-{rng.randint(1000, 9999)}-{rng.randint(1000, 9999)}."},
            {"speaker": "doctor", "text": "Any allergies to medicines?"},
            {"speaker": "patient", "text": rng.choice(["No allergies.", "Penicillin gives me a rash.", "None that I know of."])},
        ]
        out.append({
            "id": f"dlg-{i:03d}",
            "department": rng.choice(DEPARTMENTS),
            "patient": {"age": rng.randint(0, 90), "gender": rng.choice(["male", "female"])},
            "turns": turns,
        })
    write_jsonl("dialogues.jsonl", out)


def eval_items():
    out = []
    for i in range(1, 1001):
        n = rng.choice([4, 5])
        opts = rng.sample(TERMS, n)
        labels = "ABCDE"
        out.append({
            "id": f"mq-{i:04d}",
            "benchmark": "medqa-sample",
            "stem": f"Case {i}: a patient with findings typical of {opts[0].lower()}. What is the most likely diagnosis?",
            "options": {labels[j]: t for j, t in enumerate(rng.sample(opts, n))},
            "correct_label": None,
        })
        item = out[-1]
        item["correct_label"] = next(l for l, t in item["options"].items() if t == opts[0])
    write_jsonl("eval_items.jsonl", out)


def stats_items():
    out = []
    genders = ["male"] * 58 + ["female"] * 42
    rng.shuffle(genders)
    for i, g in enumerate(genders, start=1):
        answer = rng.choice(TERMS)
        distractors = rng.sample([t for t in TERMS if t != answer], 19)
        options = distractors + [answer]
        rng.shuffle(options)
        out.append({
            "id": f"st-{i:03d}",
            "department": rng.choice(DEPARTMENTS),
            "patient": {"age": rng.randint(21, 40) if i % 6 else rng.randint(41, 90), "gender": g},
            "emr": {
                "chief_complaint": "cough",
                "present_illness": "not reported",
                "past_history": "not reported",
                "allergy_history": "not reported",
                "exams": ["not reported"],
                "diagnosis": answer,
            },
            "question": "What is the most likely diagnosis?",
            "options": options + ["None of the above"],
            "answer_index": options.index(answer),
            "review": {"tier": 1, "status": "pending", "history": [], "version": 0},
        })
    write_jsonl("stats_items.jsonl", out)


if __name__ == "__main__":
    with open("icd10.txt", "w") as f:
        f.write("\n".join(TERMS) + "\n")
    seeds()
    dialogues()
    eval_items()
    stats_items()
