#!/usr/bin/env python3
"""Regenerates the fixture sources under fixtures/fixture_run/source
and the derived corpus, ground-truth, match, and annotation files.

Transcripts are recorded afterwards by `cargo run --example build_fixtures`,
because their digests depend on the Rust prompt renderer.

Usage: python3 generate_fixtures.py  (run from this directory)
"""
import csv
import json
import os
import random
import struct

HERE = os.path.dirname(os.path.abspath(__file__))
RUN = os.path.join(HERE, "fixture_run")
SRC = os.path.join(RUN, "source")
CATALOG = os.path.join(HERE, "..", "..", "core", "data", "domains.tsv")

DOMAINS = [line.split("\t")[0] for line in open(CATALOG, encoding="utf-8").read().splitlines() if line]
assert len(DOMAINS) == 46

# (purpose, capability, ai_user, ai_subject, label, tier)
# label: E already existent, U upcoming, X unlikely; tier: P prohibited, H high risk, L limited/low
USES = [
    # Biometric identification and categorization of natural persons
    ("Secure access control", "Verifying identities of individuals at entry points by matching faces against enrolled templates", "Corporations, public authorities", "Employees, visitors", "E", "H"),
    ("Categorising individuals by sensitive attributes", "Inferring ethnicity, religion or political orientation from facial images", "Data brokers, marketing firms", "General public", "E", "P"),
    ("Age estimation for age-restricted services", "Estimating age from facial features", "Online platforms, retailers", "Customers", "E", "H"),
    # Family
    ("Locating missing family members", "Matching photos of missing relatives against public image databases", "Families, NGOs", "Missing persons", "E", "H"),
    ("Organising family photo albums", "Grouping family photos by recognised faces", "Families", "Family members", "E", "L"),
    ("Elderly care assistance", "Recognizing signs of distress or confusion in elderly relatives through facial analysis", "Families, care providers", "Elderly individuals", "U", "H"),
    # Romantic relationships and friendships
    ("Preventing catfishing on dating apps", "Verifying that profile photos match the account holder's live selfie", "Dating platforms", "App users", "E", "L"),
    ("Suggesting compatible matches", "Analysing facial features to recommend look-alike partners", "Dating platforms", "App users", "E", "L"),
    ("Detecting emotional reactions during video dates", "Analysing facial expressions of partners in video calls", "Dating platforms", "App users", "U", "L"),
    # Health and Healthcare
    ("Verifying patient identity in medical settings", "Matching patients' faces with medical records at check-in", "Hospitals, clinics", "Patients", "E", "L"),
    ("Medical diagnosis", "Detecting facial signs of genetic disorders and diseases", "Healthcare providers", "Patients", "U", "H"),
    ("Pain assessment", "Estimating pain levels from facial expressions of non-verbal patients", "Hospitals, nursing homes", "Patients", "U", "H"),
    # Well-being
    ("Monitoring stress levels", "Analysing facial expressions to estimate stress and fatigue", "Wellness apps", "App users", "U", "L"),
    ("Mood tracking", "Logging daily mood from selfie facial analysis", "Mental health apps", "App users", "E", "L"),
    ("Detecting signs of depression", "Identifying facial markers associated with depressive episodes", "Mental health professionals", "Patients", "U", "H"),
    # Human-Computer Interaction
    ("Device unlocking", "Authenticating users by face to unlock smartphones and laptops", "Device manufacturers", "Device owners", "E", "L"),
    ("Adaptive user interfaces", "Adjusting interface elements based on detected user attention and expression", "Software developers", "Users", "U", "L"),
    ("Gaze-based interaction", "Tracking facial orientation to control on-screen elements", "Technology companies", "Users", "E", "L"),
    # Finance and Investment
    ("Verifying the identity of customers during transactions", "Matching customers' faces with ID documents and account records", "Banks", "Bank customers", "E", "L"),
    ("Face-based payment authorisation", "Authorising payments by facial verification at point of sale", "Payment providers", "Consumers", "E", "H"),
    ("Creditworthiness assessment", "Inferring behavioural traits from facial video during loan interviews", "Lenders, fintech companies", "Loan applicants", "U", "H"),
    # Education and vocational training
    ("Monitoring student engagement", "Detecting emotions and attention of students in classrooms", "Schools, universities", "Students", "U", "P"),
    ("Attendance tracking", "Identify students' faces and match them with database", "Schools", "Students", "E", "H"),
    ("Exam proctoring", "Verifying test-taker identity and flagging suspicious behaviour during online exams", "Universities, testing bodies", "Students", "E", "H"),
    # Employment, workers management and access to self-employment
    ("Monitoring employee emotions", "Analysing facial expressions of workers to infer emotional state and productivity", "Employers", "Employees", "U", "P"),
    ("Workplace time and attendance", "Clocking employees in and out by face", "Employers", "Employees", "E", "H"),
    ("Validate remote worker identity online", "Verifying the identity of remote workers during online work sessions", "Employers, remote work platforms", "Remote workers", "E", "H"),
    # Essential private services and public services and benefits
    ("Benefit claimant verification", "Verifying identity of individuals applying for public benefits", "Public authorities", "Benefit claimants", "E", "H"),
    ("Fraud prevention in social welfare", "Detecting duplicate benefit claims by face matching", "Welfare agencies", "Claimants", "E", "H"),
    ("Access to utility services", "Verifying customers' identity remotely when opening utility accounts", "Utility providers", "Customers", "E", "H"),
    # Recommender Systems and Personalization
    ("Personalised content recommendations", "Inferring viewer preferences from facial reactions", "Streaming platforms", "Viewers", "U", "L"),
    ("Personalised in-store displays", "Estimating shopper demographics to tailor digital signage", "Retailers", "Shoppers", "E", "H"),
    ("Personalised music playlists", "Detecting mood from facial expressions to select music", "Music apps", "Listeners", "U", "L"),
    # Social Media
    ("Building facial image databases", "Untargeted scraping of facial images from social media to build recognition databases", "Private companies", "Social media users", "E", "P"),
    ("Automatic photo tagging", "Recognising friends in uploaded photos and suggesting tags", "Social media platforms", "Users", "E", "L"),
    ("Detecting fake profiles", "Identifying accounts that use someone else's face", "Social media platforms", "Users", "E", "L"),
    # Sports and Recreation
    ("Stadium access", "Admitting ticket holders by face at stadium gates", "Stadium operators", "Spectators", "E", "H"),
    ("Athlete performance analysis", "Analysing athletes' facial expressions for fatigue and effort", "Sports teams", "Athletes", "U", "L"),
    ("Gym member check-in", "Recognising members at gym entrances", "Gyms", "Members", "E", "L"),
    # Arts and Entertainment
    ("Finding art doppelgangers", "Matching selfies against faces in painting collections", "Museums, app developers", "Visitors", "E", "L"),
    ("Audience reaction measurement", "Analysing facial responses of test audiences to films", "Film studios", "Audience members", "E", "L"),
    ("Character identification in films", "Recognising actors in movie scenes for content discovery", "Streaming platforms", "Actors, viewers", "E", "L"),
    # Security and Cybersecurity
    ("Surveillance", "Identifying individuals in surveillance footage", "Law Enforcement, Security Companies", "General Public", "E", "P"),
    ("Multi-factor authentication", "Using face verification as an authentication factor for secure systems", "IT departments", "Employees", "E", "L"),
    ("Detecting unauthorised personnel", "Flagging unrecognised individuals in restricted facilities", "Security companies", "Employees, visitors", "E", "H"),
    # Marketing and Advertising
    ("Targeted advertising", "Estimating age and gender of viewers to tailor billboard ads", "Advertisers", "Passers-by", "E", "L"),
    ("Subliminal persuasion", "Using real-time emotion detection to exploit vulnerabilities with manipulative ad content", "Advertisers", "Consumers", "U", "P"),
    ("Measuring ad effectiveness", "Tracking facial reactions of panel participants to ads", "Market research firms", "Panel participants", "E", "L"),
    # Agriculture and Farming
    ("Farm worker access control", "Verifying farm workers at restricted storage and equipment areas", "Farm operators", "Farm workers", "E", "L"),
    ("Detecting plant diseases and pest infestations", "Applying facial recognition to leaf images", "Farmers", "Crops", "X", "L"),
    ("Recognising farmers' moods to adjust irrigation", "Reading farmers' facial expressions to schedule irrigation", "Farm operators", "Farmers", "X", "L"),
    # Entrepreneurship
    ("Recognize customers, tailor services", "Identifying returning customers in small businesses to personalise service", "Small business owners", "Customers", "E", "L"),
    ("Customer demographics analytics", "Estimating visitor demographics for market validation", "Start-ups", "Customers", "E", "H"),
    ("Investor pitch feedback", "Analysing investor facial reactions during pitches", "Entrepreneurs", "Investors", "U", "L"),
    # Autonomous Robots and Robotics
    ("Assistive robots recognising household members", "Recognising individuals in a home to personalise assistance", "Robotics companies, households", "Household members", "U", "L"),
    ("Identifying obstacles and people to avoid collisions", "Detecting human faces and bodies to adjust robot motion", "Robotics companies", "People near robots", "E", "L"),
    ("Operator-gated robot activation", "Starting industrial robot operations only when an authorised operator is recognised", "Manufacturers", "Operators", "E", "H"),
    # Innovation and Research
    ("Accelerating recognition research", "Releasing benchmark face datasets", "Research institutions", "Dataset subjects", "E", "L"),
    ("Studying human behaviour", "Analysing facial behaviour in laboratory experiments", "Researchers", "Study participants", "E", "L"),
    ("Using diverse facial data to refine algorithms", "Training recognition models on demographically diverse faces to reduce bias", "AI developers, research labs", "Data subjects", "E", "L"),
    # Management and Operation of critical infrastructure
    ("Control room access", "Verifying operators before granting access to infrastructure control systems", "Infrastructure operators", "Operators", "E", "H"),
    ("Perimeter intrusion detection", "Identifying unknown persons near power plants and water facilities", "Infrastructure operators", "Intruders, staff", "E", "H"),
    ("Operator fatigue monitoring", "Detecting drowsiness in control room staff", "Utility companies", "Operators", "U", "H"),
    # Law enforcement
    ("Real-time identification of suspects in public spaces", "Matching live CCTV feeds against watchlists", "Police", "General public", "E", "P"),
    ("Booking and record keeping", "Recording facial information of arrested individuals", "Police", "Arrested individuals", "E", "H"),
    ("Locating missing persons", "Searching CCTV footage for missing persons", "Police", "Missing persons", "E", "H"),
    # Migration, Asylum and Border control management
    ("Lie detection at borders", "Analysing facial micro-expressions of travellers during interviews to assess deception", "Border authorities", "Travellers, asylum seekers", "U", "P"),
    ("Identify watchlisted individuals at borders", "Matching travellers against watchlists at border crossings", "Border authorities", "Travellers", "E", "H"),
    ("Verify asylum seeker identities", "Matching asylum seekers' faces to registration records", "Migration agencies", "Asylum seekers", "E", "H"),
    # Democracy
    ("Prevent voter fraud via identity verification", "Verifying voters' faces against electoral rolls at polling stations", "Electoral commissions", "Voters", "U", "H"),
    ("Analysing candidate debates", "Measuring audience emotional reactions to political debate broadcasts", "Media analysts, campaigns", "Viewers", "U", "H"),
    ("Identifying protest participants", "Matching faces in protest footage against databases", "Public authorities", "Protesters", "E", "H"),
    # Media and Communication
    ("Video archive indexing", "Indexing faces of public figures in news archives", "Broadcasters", "Public figures", "E", "L"),
    ("Deepfake detection", "Detecting manipulated faces in video content", "Media organisations", "Viewers, depicted individuals", "E", "L"),
    ("Automated captioning of speakers", "Identifying on-screen speakers for live captioning", "Broadcasters", "Speakers, viewers", "E", "L"),
    # Accessibility and Inclusion
    ("Assisting visually impaired people to recognise others", "Identifying known people and announcing their names through wearable cameras", "Assistive technology companies", "Visually impaired individuals, bystanders", "U", "H"),
    ("Facilitating non-verbal communication", "Interpreting facial expressions and gestures for non-verbal individuals", "Assistive technology providers", "Non-verbal individuals", "U", "L"),
    ("Hands-free device control", "Controlling devices through facial movements for people with motor impairments", "Assistive technology companies", "People with motor impairments", "E", "L"),
    # Energy
    ("Smart meter technician verification", "Verifying identities of technicians visiting homes", "Energy companies", "Technicians, residents", "E", "L"),
    ("Authenticate energy facility personnel access", "Verifying personnel at energy facility entrances", "Energy companies", "Personnel", "E", "H"),
    ("Energy usage personalisation", "Recognising occupants to adjust heating", "Energy providers", "Residents", "U", "L"),
    # Military and Defense
    ("Target identification", "Identifying persons of interest in drone imagery", "Armed forces", "Combatants, civilians", "E", "H"),
    ("Verify military personnel identities", "Verifying soldiers at base entry points", "Armed forces", "Military personnel", "E", "H"),
    ("Identify threats in crowds by military", "Scanning crowds for known threats during operations", "Armed forces", "Civilians", "U", "H"),
    # Administration of justice and democratic processes
    ("Assisting law enforcement agencies in criminal investigations", "Identifying suspects in video footage", "Law enforcement agencies", "Suspects", "E", "H"),
    ("Courtroom identity verification", "Verifying defendants and witnesses appearing remotely", "Courts", "Defendants, witnesses", "E", "H"),
    ("Assessing witness credibility", "Analysing witness facial expressions during testimony", "Courts", "Witnesses", "U", "H"),
    # Government Services and Administration
    ("Identify citizens for personalized services", "Recognising citizens at service counters to retrieve their records", "Government agencies", "Citizens", "U", "H"),
    ("Digital identity onboarding", "Matching selfies with passport photos for e-government accounts", "Government agencies", "Citizens", "E", "H"),
    ("Driver licence renewal", "Verifying applicants' faces against stored licence photos", "Transport authorities", "Drivers", "E", "H"),
    # Diplomacy and Foreign Policy
    ("Secure embassies by identifying visitors", "Recognising visitors at embassy entrances", "Embassies", "Visitors", "E", "H"),
    ("Identifying delegates at summits", "Verifying accredited delegates at diplomatic events", "Event organisers, foreign ministries", "Delegates", "E", "L"),
    ("Analysing leaders' expressions during negotiations", "Reading facial cues of counterparts in negotiation footage", "Diplomatic analysts", "Foreign officials", "U", "L"),
    # Food Safety and Regulation
    ("Kitchen hygiene compliance", "Verifying that only authorised staff enter food processing zones", "Food processors", "Workers", "E", "L"),
    ("Detecting food spoilage", "Applying facial recognition to produce images", "Food inspectors", "Food products", "X", "L"),
    ("Restaurant inspector verification", "Confirming identity of food inspectors on site", "Regulatory agencies", "Inspectors", "U", "L"),
    # Crisis Management and Emergency Response
    ("Identifying disaster victims", "Matching faces of victims with missing-person reports", "Emergency services", "Disaster victims", "E", "H"),
    ("Authenticate emergency responders' identities", "Verifying responders at incident perimeters", "Emergency agencies", "Emergency responders", "U", "H"),
    ("Reuniting separated families", "Matching evacuees' photos with relatives' submissions", "Relief organisations", "Evacuees", "U", "H"),
    # Humanitarian Aid
    ("Aid distribution verification", "Verifying aid recipients to prevent duplicate distribution", "NGOs, UN agencies", "Refugees", "E", "H"),
    ("Refugee registration", "Enrolling refugees' faces in registration systems", "UN agencies", "Refugees", "E", "H"),
    ("Family tracing in refugee camps", "Matching faces of separated children with parents", "Humanitarian organisations", "Children, parents", "U", "H"),
    # Transport and Logistics
    ("Airport boarding", "Matching passengers' faces with boarding passes at gates", "Airlines, airports", "Passengers", "E", "H"),
    ("Verify cargo access by authorized personnel", "Identifying personnel by logistics companies to improve the efficiency of cargo handling", "Logistics companies", "Warehouse staff", "E", "L"),
    ("Driver identification for fleet vehicles", "Verifying drivers before vehicle start", "Fleet operators", "Drivers", "E", "L"),
    # Urban Planning
    ("Pedestrian flow analysis", "Counting and tracking faces to measure foot traffic", "City planners", "Pedestrians", "E", "H"),
    ("Smart city public service access", "Recognising residents at municipal facilities", "City councils", "Residents", "U", "H"),
    ("Control access to restricted urban areas", "Verifying residents entering restricted zones", "City authorities", "Residents, visitors", "U", "H"),
    # Counterterrorism
    ("Real-time crowd screening", "Scanning crowds at public events against terrorist watchlists in real time", "Security agencies", "General public", "E", "P"),
    ("Post-event investigation", "Identifying suspects in footage after attacks", "Intelligence agencies", "Suspects", "E", "H"),
    ("Critical site visitor screening", "Matching visitors against watchlists at critical sites", "Security agencies", "Visitors", "E", "H"),
    # Environment and Sustainability
    ("Monitoring tree growth", "Applying facial recognition to forest canopy images", "Environmental agencies", "Forests", "X", "L"),
    ("Detecting litterers' emotions to promote recycling", "Reading facial expressions of passers-by at recycling bins", "Municipalities", "Passers-by", "X", "L"),
    ("Verify access to protected environmental areas", "Verifying visitors' permits at nature reserve entrances", "Park authorities", "Visitors", "U", "L"),
    # International Law Enforcement and Cooperation
    ("Cross-border suspect identification", "Matching suspect images across international police databases", "Interpol, national police", "Suspects", "E", "H"),
    ("Real-time tracking of fugitives across borders", "Matching live public CCTV feeds against international wanted lists", "Police, Interpol", "General public", "U", "P"),
    ("Human trafficking victim identification", "Matching images of potential victims against missing persons databases", "Police, NGOs", "Trafficking victims", "E", "H"),
    # Climate Change Mitigation and Adaptation
    ("Identify illegal loggers", "Matching faces captured by forest cameras against offender records", "Environmental enforcement agencies", "Suspected loggers", "U", "H"),
    ("Tracking the carbon footprint of individuals", "Identifying individuals to log their consumption", "Governments", "Citizens", "X", "H"),
    ("Verify access to climate-sensitive areas", "Verifying authorised researchers at polar research stations", "Research stations", "Researchers", "U", "L"),
    # Gaming and interactive experiences
    ("Enhancing player immersion", "Translating player's facial expressions into game", "Game developers, VR platforms", "Gamers", "E", "L"),
    ("Age verification for games", "Estimating player age to enforce ratings", "Game platforms", "Players", "E", "L"),
    ("Personalised avatars", "Generating avatars from players' faces", "Game developers", "Players", "E", "L"),
    # Hobbies
    ("Organising hobby photo collections", "Grouping photos by the faces they contain", "Photo management apps", "Photographed people", "E", "L"),
    ("Predicting chess moves from opponents' faces", "Analysing opponents' expressions to forecast their next move", "Chess apps", "Players", "X", "L"),
    ("Identifying garden plants", "Applying face matching to flowers", "Gardening apps", "Plants", "X", "L"),
    # Smart home
    ("Monitoring child safety", "Alerting when unrecognized faces are detected", "Parents, security companies", "Children", "E", "H"),
    ("Smart doorbell visitor identification", "Identifying individuals approaching homes", "Homeowners", "Visitors", "E", "H"),
    ("Personalised home settings", "Recognising household members to adjust lighting and temperature", "Smart home providers", "Household members", "E", "L"),
    # Social and Community Services
    ("Community centre check-in", "Recognising registered members at community centres", "Community organisations", "Members", "E", "L"),
    ("Homeless services identity support", "Verifying identities of people without documents", "Social services", "Homeless individuals", "U", "H"),
    ("Eligibility screening for social housing", "Verifying applicants' identity for housing allocation", "Housing authorities", "Applicants", "E", "H"),
    # Public and private transportation
    ("Fare payment on public transport", "Charging passengers by face at gates", "Transit operators", "Passengers", "E", "H"),
    ("Improving driver safety by detecting driver fatigue", "Detecting driver fatigue through facial analysis of eyes and expressions", "Car manufacturers, fleet operators", "Drivers", "E", "H"),
    ("Identifying fare evaders", "Matching faces of fare dodgers to penalty records", "Transit operators", "Passengers", "E", "H"),
    # Interpersonal Communication
    ("Automatic framing in video calls", "Tracking the speaker's face to frame the video", "Communication apps", "Call participants", "E", "L"),
    ("Emotion-aware messaging", "Suggesting emojis based on detected facial expressions", "Messaging apps", "Users", "E", "L"),
    ("Real-time translation avatars", "Animating translated speech with the speaker's facial expressions", "Communication apps", "Users", "U", "L"),
]
assert len(USES) == 138, len(USES)

OVERLOOKED = [27, 52, 68, 69, 70, 80, 83, 84, 88, 91, 98, 104, 108, 114, 118, 120]

LABEL_TEXT = {"E": "already existent", "U": "upcoming", "X": "unlikely"}
TIER_TEXT = {"P": "Prohibited", "H": "High Risk", "L": "Limited or Low Risk"}

JUSTIFICATION = {
    "E": "This use is currently implemented and well established in {d}.",
    "U": "This use is being researched and piloted in {d}, but wide deployment still depends on resolving privacy and trust issues.",
    "X": "This use does not rely on the capabilities of the technology and lacks practical value in {d}.",
}


def counts():
    from collections import Counter
    return Counter(u[4] for u in USES), Counter(u[5] for u in USES)


lab, tier = counts()
assert lab == {"E": 91, "U": 39, "X": 8}, lab
assert tier == {"P": 10, "H": 66, "L": 62}, tier
for i in OVERLOOKED:
    assert USES[i - 1][4] != "X"


def use_record(i):
    purpose, cap, user, subject, label, _ = USES[i - 1]
    domain = DOMAINS[(i - 1) // 3]
    return {
        "domain": domain,
        "purpose": purpose,
        "capability": cap,
        "ai_user": user,
        "ai_subject": subject,
        "realisticness": LABEL_TEXT[label],
        "justification": JUSTIFICATION[label].format(d=domain.lower()),
    }


# ---------------------------------------------------------------- generation response

def write_generation_response():
    records = [use_record(i) for i in range(1, 139)]
    # two repeats the dedup stage has to remove (case and whitespace differ)
    dup_a = dict(records[12])
    dup_a["purpose"] = "  monitoring STRESS levels "
    dup_b = dict(records[76])
    dup_b["ai_user"] = "Assistive  technology providers"
    records.extend([dup_a, dup_b])
    text = "```json\n" + json.dumps(records, indent=2, ensure_ascii=False) + "\n```\n"
    with open(os.path.join(SRC, "generation_response.txt"), "w", encoding="utf-8") as f:
        f.write(text)


# ---------------------------------------------------------------- risk responses

PROHIBITED_CITE = {
    2: ("Article 5(1)(ba)", "biometric categorisation of natural persons according to sensitive attributes"),
    22: ("Article 5(1)(dc)", "emotion recognition in education institutions"),
    25: ("Article 5(1)(dc)", "emotion recognition in the workplace"),
    34: ("Article 5(1)(db)", "the untargeted scraping of facial images to build recognition databases"),
    43: ("Article 5(1)(d)", "the use of real-time remote biometric identification in publicly accessible spaces for law enforcement"),
    47: ("Article 5(1)(a)", "manipulative techniques that materially distort behaviour"),
    64: ("Article 5(1)(d)", "the use of real-time remote biometric identification in publicly accessible spaces for law enforcement"),
    67: ("Article 5(1)(dc)", "emotion recognition in border management"),
    109: ("Article 5(1)(d)", "the use of real-time remote biometric identification in publicly accessible spaces for law enforcement"),
    116: ("Article 5(1)(d)", "the use of real-time remote biometric identification in publicly accessible spaces for law enforcement"),
}

DOMAIN_ANNEX = {
    "Education and vocational training": "Section 3(b)",
    "Employment, workers management and access to self-employment": "Section 4(b)",
    "Essential private services and public services and benefits": "Section 5(a)",
    "Management and Operation of critical infrastructure": "Section 2(a)",
    "Law enforcement": "Section 6(d)",
    "Migration, Asylum and Border control management": "Section 7(b)",
    "Administration of justice and democratic processes": "Section 8(a)",
    "Democracy": "Section 8(aa)",
    "Finance and Investment": "Section 5(b)",
    "Energy": "Section 2(a)",
}

EXEMPLAR_REASONING = {
    43: "Prohibited due to the use of real-time remote biometric identification in publicly accessible spaces for law enforcement, which falls under the EU AI Act Article 5(1)(d).",
    127: "High Risk due to the use of biometric identification, which falls under the EU AI Act Article 6(2) and Annex III, Section 1(a).",
    121: "Limited or Low Risk due to its application in gaming for enhancing immersion without significant risk to fundamental rights or safety.",
}


def excerpt_text(location):
    blocks = open(os.path.join(HERE, "..", "..", "core", "data", "act_excerpts.txt"), encoding="utf-8").read().strip().split("\n\n")
    for b in blocks:
        loc, text = b.split("\n", 1)
        if loc == location:
            return text.replace("\n", " ")
    raise KeyError(location)


def risk_response(i):
    purpose, cap, user, subject, _, t = USES[i - 1]
    domain = DOMAINS[(i - 1) // 3]
    description = (
        f"A hypothetical AI system deployed by {user.lower()} in the {domain} domain. "
        f"Its purpose is {purpose[0].lower() + purpose[1:]}, which it achieves by {cap[0].lower() + cap[1:]}. "
        f"The people affected are {subject.lower()}."
    )
    if t == "P":
        loc, why = PROHIBITED_CITE[i]
        relevant = f"\"{excerpt_text(loc)[:160].rstrip()}...\" ({loc})"
        reasoning = EXEMPLAR_REASONING.get(i, f"Prohibited due to {why}, which falls under the EU AI Act {loc}.")
        cls = "Prohibited"
    elif t == "H":
        section = DOMAIN_ANNEX.get(domain, "Section 1(a)")
        loc = f"Annex III, {section}"
        relevant = f"\"{excerpt_text('Annex III ' + section)[:160].rstrip()}...\" (Article 6(2) and {loc})"
        reasoning = EXEMPLAR_REASONING.get(
            i, f"High Risk due to the use of biometric identification in {domain.lower()}, which falls under the EU AI Act Article 6(2) and {loc}."
        )
        cls = "High Risk"
    else:
        relevant = None
        reasoning = EXEMPLAR_REASONING.get(
            i, f"Limited or Low Risk due to its application in {domain.lower()} without significant risk to fundamental rights or safety."
        )
        cls = "Limited or Low Risk"
    obj = {
        "description": description,
        "classification": cls,
        "relevant_text": relevant,
        "reasoning": reasoning,
    }
    return json.dumps(obj, indent=2, ensure_ascii=False)


def write_risk_responses():
    with open(os.path.join(SRC, "risk_responses.jsonl"), "w", encoding="utf-8") as f:
        for i in range(1, 139):
            f.write(json.dumps({"use_id": str(i), "response": risk_response(i)}, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------- embedding mirror

STOPWORDS = set(
    "a an and are as at be by for from has have in into is it its of on or that the their this to was were will with".split()
)
DIM = 512


def fnv1a(s):
    h = 0xCBF29CE484222325
    for b in s.encode("utf-8"):
        h ^= b
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def tokens(text):
    out, cur = [], []
    for ch in text.lower():
        if ch.isalnum():
            cur.append(ch)
        else:
            if cur:
                out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return [t for t in out if len(t) >= 2 and t not in STOPWORDS]


def embed(text):
    v = [0.0] * DIM
    for t in tokens(text):
        h = fnv1a(t)
        sign = -1.0 if (h >> 63) & 1 else 1.0
        v[h % DIM] += sign
    n = sum(x * x for x in v) ** 0.5
    v = [float(struct.unpack("f", struct.pack("f", x / n))[0]) for x in v]
    return v


def cos(a, b):
    return sum(x * y for x, y in zip(a, b))


def use_description(i):
    purpose, cap, *_ = USES[i - 1]
    return f"{purpose}. {cap}. {DOMAINS[(i - 1) // 3]}."


# ---------------------------------------------------------------- corpus

NOISE_TOPICS = [
    "protein folding", "graph neural networks", "ocean acidification", "galaxy rotation curves",
    "soil microbiome", "battery electrolyte", "quantum error correction", "monetary policy",
    "medieval manuscripts", "glacier dynamics", "polymer rheology", "compiler optimisation",
    "volcanic ash dispersion", "supply chain contracts", "bird migration", "seismic tomography",
    "wind turbine wakes", "coral reef bleaching", "lattice cryptography", "river sediment transport",
    "tax compliance", "antibiotic resistance", "language acquisition", "ceramic sintering",
]
NOISE_WORDS = (
    "model analysis method results study proposed approach data framework experimental evaluation "
    "performance simulation theory measurement novel empirical dataset estimation optimisation "
    "structure process dynamics parameters observations variability mechanism sampling spectral "
    "thermal numerical statistical regional temporal coupled nonlinear stochastic boundary layer"
).split()
VENUES_SUPPORT = [
    "arXiv.org",
    "International Journal for Research in Applied Science and Engineering Technology",
    "IEEE International Conference on Systems, Man and Cybernetics",
    "ACM Multimedia",
    "Interspeech",
    "PLoS ONE",
    "IEEE/ACM International Conference on Human-Robot Interaction",
    "Computer",
]
VENUES_NOISE = ["Nature Geoscience", "Physical Review B", "Journal of Applied Polymer Science", "Ecology Letters", "Econometrica"]

PAPER_FRAMES = [
    ("{p}: a facial recognition approach", "We study {c}. The system targets {d}."),
    ("Towards {p}", "This paper presents {c} with an evaluation in {d}."),
    ("{p} with face analysis", "We propose {c} for {d} settings."),
]


def supporters_per_use():
    rng = random.Random(7)
    counts = {}
    for i in range(1, 139):
        if i in OVERLOOKED:
            continue
        counts[i] = rng.choice([1, 1, 2, 2, 2, 3])
    counts[1] = 6
    counts[134] = 5
    counts[60] = 4
    # 251 of 5000 kept papers puts the 95th nearest-rank percentile on the weakest planted paper
    keys = sorted(k for k in counts if k not in (1, 134, 60))
    while sum(counts.values()) != 251:
        k = rng.choice(keys)
        if sum(counts.values()) > 251 and counts[k] > 1:
            counts[k] -= 1
        elif sum(counts.values()) < 251 and counts[k] < 3:
            counts[k] += 1
    return counts


def write_corpus():
    rng = random.Random(11)
    counts = supporters_per_use()
    planted = []
    for i, n in counts.items():
        purpose, cap, *_ = USES[i - 1]
        domain = DOMAINS[(i - 1) // 3]
        for k in range(n):
            title_t, abs_t = PAPER_FRAMES[k % len(PAPER_FRAMES)]
            planted.append(
                {
                    "title": title_t.format(p=purpose),
                    "abstract": abs_t.format(c=cap[0].lower() + cap[1:], d=domain),
                    "venue": VENUES_SUPPORT[(i + k) % len(VENUES_SUPPORT)] if k < 2 else VENUES_SUPPORT[0],
                    "language": "en",
                    "use": i,
                }
            )
    total_kept = 5000
    noise_n = total_kept - len(planted)
    noise = []
    for n in range(noise_n):
        topic = NOISE_TOPICS[n % len(NOISE_TOPICS)]
        words = rng.sample(NOISE_WORDS, 9)
        noise.append(
            {
                "title": f"{topic.capitalize()} {words[0]} and {words[1]}",
                "abstract": f"We report {words[2]} {words[3]} of {topic} using {words[4]} {words[5]} {words[6]}, with {words[7]} {words[8]}.",
                "venue": VENUES_NOISE[n % len(VENUES_NOISE)],
                "language": rng.choice(["en", "en", None]) if n % 50 == 0 else "en",
            }
        )
    rejects = []
    for n in range(60):
        rejects.append({"title": f"Gesichtserkennung Studie {n}", "abstract": "Eine Untersuchung der Gesichtserkennung.", "venue": "Informatik Spektrum", "language": "de"})
    for n in range(40):
        rejects.append({"title": f"Face recognition note {n}", "abstract": "", "venue": "arXiv.org", "language": "en"})
    allrec = planted + noise + rejects
    rng.shuffle(allrec)

    # verify with the mirrored hashing embedder
    use_vecs = {i: embed(use_description(i)) for i in range(1, 139)}
    kept = [r for r in allrec if r["abstract"] and r["language"] in ("en", None)]
    assert len(kept) == total_kept, len(kept)
    per_paper = []
    for r in kept:
        pv = embed(r["title"] + " " + r["abstract"])
        sims = [cos(pv, use_vecs[i]) for i in range(1, 139)]
        r["_max"] = max(sims)
        r["_sims"] = sims
        per_paper.append(r["_max"])
    srt = sorted(per_paper)
    rank = -(-95 * total_kept // 100)  # nearest rank, ceil
    thr = srt[rank - 1]
    min_planted = min(r["_max"] for r in kept if "use" in r)
    max_noise = max(r["_max"] for r in kept if "use" not in r)
    assert max_noise < min_planted, (max_noise, min_planted)
    assert abs(thr - min_planted) < 1e-12, (thr, min_planted)
    supported = set()
    for r in kept:
        for i, s in enumerate(r["_sims"], start=1):
            if s >= thr:
                supported.add(i)
    overlooked = sorted(set(range(1, 139)) - supported)
    assert overlooked == OVERLOOKED, overlooked
    print(f"corpus: {len(allrec)} raw, {len(kept)} kept, threshold {thr:.4f}, max noise {max_noise:.4f}")

    with open(os.path.join(RUN, "corpus.jsonl"), "w", encoding="utf-8") as f:
        for n, r in enumerate(allrec):
            rec = {"paper_id": f"P{n + 1:05d}", "title": r["title"], "abstract": r["abstract"], "venue": r["venue"], "language": r["language"]}
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")
        f.write("{not json\n")


# ---------------------------------------------------------------- ground truth

GT_MATCHES = {
    "1": [1, 45, 61], "2": [16, 44], "3": [45], "4": [91], "5": [], "6": [2], "7": [106], "8": [128],
    "9": [127], "10": [16], "11": [105], "12": [105], "13": [23, 26], "14": [24], "15": [24], "16": [2, 3],
    "17": [2], "18": [32], "19": [46], "20": [52], "21": [48], "22": [53], "23": [129], "24": [64, 85],
    "25": [65], "26": [110], "27": [135], "28": [135], "29": [37], "30": [68, 109], "31": [117], "32": [4, 66],
    "33": [85], "34": [35], "35": [5], "36": [36], "37": [74], "38": [124], "39": [34], "40": [40],
    "41": [36], "42": [35], "43": [7], "44": [20], "45": [19], "46": [133], "47": [10], "48": [10],
    "49": [10], "50": [10], "51": [11], "52": [97], "53": [15], "54": [78], "55": [76], "56": [76],
    "57": [57], "58": [55], "59": [70], "60": [22], "61": [123], "62": [42], "63": [123], "64": [123],
    "65a": [103], "65b": [103], "66": [68], "67": [89], "68": [37], "69": [134], "70": [13], "71": [25],
    "72": [], "73": [43], "74": [],
}


def write_ground_truth():
    src = open(os.path.join(SRC, "ground_truth_list.txt"), encoding="utf-8").read().strip().splitlines()
    assert len(src) == 75
    with open(os.path.join(RUN, "ground_truth.tsv"), "w", encoding="utf-8") as gt, open(
        os.path.join(RUN, "coverage_matches.tsv"), "w", encoding="utf-8"
    ) as m:
        for line in src:
            gid, desc, keys = line.split("\t")
            gt.write(f"{gid}\t{desc}\t{keys}\n")
            ids = GT_MATCHES[gid]
            rationale = "relaxed match on purpose" if ids else "no generated use describes this purpose"
            m.write(f"{gid}\t{','.join(str(i) for i in ids)}\t{rationale}\n")


# ---------------------------------------------------------------- annotations

LIKERT_TARGETS = {
    # cohort, scope -> item -> weights for scores 1..7
    ("Developer", "all"): {
        "familiarity": [50, 14, 10, 9, 8, 5, 4],
        "adoption": [4, 6, 10, 12, 27, 16, 25],
        "transformation": [8, 10, 14, 20, 18, 15, 15],
        "risk_society": [12, 22, 24, 18, 12, 8, 4],
        "risk_environment": [55, 15, 10, 8, 6, 4, 2],
    },
    ("Developer", "overlooked"): {
        "familiarity": [60, 15, 9, 7, 5, 2, 2],
        "adoption": [5, 10, 15, 18, 25, 14, 13],
        "transformation": [10, 12, 15, 21, 17, 13, 12],
        "risk_society": [10, 20, 25, 20, 13, 8, 4],
        "risk_environment": [58, 15, 10, 7, 5, 3, 2],
    },
    ("ComplianceExpert", "all"): {
        "familiarity": [48, 15, 10, 9, 8, 6, 4],
        "adoption": [3, 4, 7, 10, 18, 20, 38],
        "transformation": [4, 6, 9, 14, 19, 21, 27],
        "risk_society": [6, 10, 15, 18, 20, 17, 14],
        "risk_environment": [40, 18, 14, 11, 8, 5, 4],
    },
    ("ComplianceExpert", "overlooked"): {
        "familiarity": [75, 10, 6, 4, 3, 1, 1],
        "adoption": [3, 4, 7, 10, 18, 21, 37],
        "transformation": [4, 6, 9, 14, 20, 20, 27],
        "risk_society": [6, 10, 15, 18, 20, 17, 14],
        "risk_environment": [42, 18, 14, 10, 8, 5, 3],
    },
}
ITEMS = ["familiarity", "adoption", "transformation", "risk_society", "risk_environment"]


def quota_sequence(weights, n, rng):
    total = sum(weights)
    raw = [w * n / total for w in weights]
    counts = [int(x) for x in raw]
    rem = sorted(range(7), key=lambda k: raw[k] - counts[k], reverse=True)
    for k in rem[: n - sum(counts)]:
        counts[k] += 1
    seq = [s + 1 for s, c in enumerate(counts) for _ in range(c)]
    rng.shuffle(seq)
    return seq


def write_annotations():
    rng = random.Random(23)
    slots = []  # (use_id, rater, cohort)
    blocks = [range(1, 47), range(47, 93), range(93, 139)]
    for cohort, prefix in (("Developer", "dev"), ("ComplianceExpert", "ce")):
        for r in range(9):
            for u in blocks[r // 3]:
                slots.append((u, f"{prefix}-online-{r + 1:02d}", cohort))
        inperson = 3 if cohort == "Developer" else 4
        for r in range(inperson):
            for u in OVERLOOKED:
                slots.append((u, f"{prefix}-inperson-{r + 1:02d}", cohort))

    scores = {}
    for cohort in ("Developer", "ComplianceExpert"):
        for scope in ("all", "overlooked"):
            sel = [s for s in slots if s[2] == cohort and ((s[0] in OVERLOOKED) == (scope == "overlooked"))]
            targets = LIKERT_TARGETS[(cohort, scope)]
            if scope == "all":
                # non-overlooked slots carry the all-uses shape
                pass
            for item in ITEMS:
                seq = quota_sequence(targets[item], len(sel), rng)
                for s, v in zip(sel, seq):
                    scores.setdefault(s, {})[item] = v

    rows = []
    vote_rng = random.Random(5)
    for s in slots:
        u, rater, cohort = s
        label = USES[u - 1][4]
        tier = USES[u - 1][5]
        if label == "X":
            vote = vote_rng.choice(["unlikely", "unlikely", "upcoming"])
        else:
            vote = LABEL_TEXT[label] if vote_rng.random() < 0.8 else ("upcoming" if label == "E" else "already existent")
        row = {
            "use_id": str(u),
            "rater_id": rater,
            "cohort": "developer" if cohort == "Developer" else "compliance_expert",
            "realisticness_vote": vote,
        }
        row.update({k: str(v) for k, v in scores[s].items()})
        row["classification_agreement"] = ""
        row["corrected_classification"] = ""
        row["reasoning_correction"] = ""
        row["usefulness_notes"] = ""
        if cohort == "ComplianceExpert":
            disagree = (u in (19, 56) and rater.endswith(("01", "02"))) or (u == 85 and rater.startswith("ce-online"))
            if disagree:
                row["classification_agreement"] = "disagree"
                if u == 19:
                    row["corrected_classification"] = "high risk"
                    row["reasoning_correction"] = "High chance for fraud; the system could see the PIN of the bank card."
                elif u == 56:
                    row["corrected_classification"] = "high risk"
                    row["reasoning_correction"] = "Misuse or malfunction could seriously harm individuals."
                else:
                    row["corrected_classification"] = "prohibited" if not rater.endswith("03") else "limited or low risk"
            else:
                row["classification_agreement"] = "agree"
        if rater.startswith(("dev-inperson", "ce-inperson")) and u == OVERLOOKED[0]:
            row["usefulness_notes"] = "Useful for brainstorming uses early in the design stage."
        rows.append(row)
    header = ["use_id", "rater_id", "cohort", "realisticness_vote"] + ITEMS + [
        "classification_agreement", "corrected_classification", "reasoning_correction", "usefulness_notes"
    ]
    with open(os.path.join(RUN, "annotations.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("# annotations-csv v1\n")
        w = csv.DictWriter(f, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    raters = sorted({s[1] for s in slots})
    with open(os.path.join(RUN, "attention_checks.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("rater_id,check_1,check_2,check_3\n")
        for r in raters:
            checks = ["correct", "correct", "correct"]
            if r == "dev-online-04":
                checks[2] = "wrong"
            f.write(f"{r},{','.join(checks)}\n")
    print(f"annotations: {len(rows)} cards, {len(raters)} raters")


if __name__ == "__main__":
    os.makedirs(SRC, exist_ok=True)
    write_generation_response()
    write_risk_responses()
    write_corpus()
    write_ground_truth()
    write_annotations()
