#!/usr/bin/env python3
"""Writes data/fixtures/tacred_synth.json: a deterministic, TACRED-shaped gold
set with 12 template sentences for each of the 42 TACRED relations.

The sentences are synthetic. They exist so that preference-pair construction and
the end-to-end pipeline can run without the licensed TACRED release.
"""

import json
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
CATALOG = ROOT / "crates" / "core" / "resources" / "catalog.json"
OUT = ROOT / "data" / "fixtures" / "tacred_synth.json"
PER_RELATION = 12

PEOPLE = [
    "Maria Lopez", "John Carter", "Wei Zhang", "Amina Yusuf", "Peter Novak",
    "Laura Bianchi", "Kenji Sato", "Olga Ivanova", "David Cohen", "Fatima Khan",
    "Samuel Okoro", "Elena Petrova", "Lucas Martin", "Grace Kim", "Omar Haddad",
]
ORGS = [
    "Northwind Corp", "Blue Harbor Bank", "Apex Robotics", "Green Valley Union",
    "Stellar Media", "Redwood Partners", "Orion Labs", "Summit Health",
    "Civic Action League", "Atlas Shipping", "Pioneer Foods", "Horizon Airlines",
]
TAILS = {
    "age": ["34", "52", "71", "28", "45", "63", "39", "80", "19", "57", "66", "41"],
    "date": ["March 1961", "1984", "June 3 , 1990", "2002", "May 1975", "1948",
             "April 12 , 2011", "1999", "October 1933", "2015", "July 1968", "1920"],
    "city": ["Chicago", "Lyon", "Osaka", "Nairobi", "Porto", "Denver", "Krakow",
             "Austin", "Seville", "Perth", "Leeds", "Tampa"],
    "state": ["Ohio", "Bavaria", "Ontario", "Queensland", "Texas", "Catalonia",
              "Oregon", "Punjab", "Kerala", "Utah", "Victoria", "Maine"],
    "country": ["Brazil", "Kenya", "Norway", "Vietnam", "Chile", "Poland",
                "Ireland", "Egypt", "Canada", "Peru", "Japan", "Greece"],
    "person": PEOPLE,
    "org": ORGS,
    "title": ["chief executive", "senator", "professor", "editor", "coach",
              "ambassador", "director", "mayor", "surgeon", "architect",
              "spokesman", "chairman"],
    "cause": ["cancer", "a heart attack", "pneumonia", "a stroke", "injuries",
              "a car crash", "malaria", "heart failure", "an overdose",
              "complications", "leukemia", "a fall"],
    "religion": ["Catholic", "Muslim", "Buddhist", "Jewish", "Hindu", "Baptist",
                 "Anglican", "Sikh", "Methodist", "Orthodox", "Lutheran", "Mormon"],
    "charge": ["fraud", "bribery", "theft", "perjury", "assault", "tax evasion",
               "smuggling", "forgery", "extortion", "arson", "espionage", "libel"],
    "number": ["1,200", "450", "30,000", "85", "2,500", "700", "12,000", "64",
               "9,800", "310", "5,400", "150"],
    "website": ["northwind.com", "blueharbor.org", "apexbots.net", "gvu.org",
                "stellar.tv", "redwood.io", "orionlabs.com", "summithealth.org",
                "civicleague.org", "atlas.co", "pioneerfoods.com", "horizonair.com"],
    "alias": ["NWC", "BHB", "Apex", "GVU", "Stellar", "Redwood", "Orion",
              "Summit", "CAL", "Atlas", "Pioneer", "Horizon"],
    "nickname": ["Mimi", "Jack", "Sunny", "Ami", "Pete", "Lulu", "Ken", "Ollie",
                 "Dave", "Fay", "Sam", "Ellie"],
    "origin": ["Irish", "Nigerian", "Korean", "Mexican", "Italian", "Turkish",
               "Swedish", "Indian", "Polish", "Cuban", "Greek", "Lebanese"],
    "affiliation": ["Democratic", "Catholic", "Republican", "Islamic", "Labour",
                    "Protestant", "Green", "Liberal", "Buddhist", "Socialist",
                    "Conservative", "Evangelical"],
    "school": ["Harvard University", "Oxford", "Yale", "Stanford", "MIT",
               "Columbia", "Princeton", "Cornell", "Duke", "Cambridge",
               "Berkeley", "Brown"],
}

# (tail kind, sentence frames). {h} is the head, {t} the tail.
FRAMES = {
    "per:age": ("age", ["{h} , {t} , said the plan would work .",
                        "{h} , who is {t} years old , retired last week .",
                        "At {t} , {h} still runs every morning ."]),
    "per:date_of_birth": ("date", ["{h} was born in {t} .",
                                   "Born {t} , {h} grew up on a farm ."]),
    "per:date_of_death": ("date", ["{h} died in {t} .",
                                   "{h} passed away in {t} after a long illness ."]),
    "per:cause_of_death": ("cause", ["{h} died of {t} on Sunday .",
                                     "The family said {h} succumbed to {t} ."]),
    "per:city_of_birth": ("city", ["{h} was born in {t} .",
                                   "A native of {t} , {h} moved abroad at 20 ."]),
    "per:city_of_death": ("city", ["{h} died at a hospital in {t} .",
                                   "{h} passed away at home in {t} ."]),
    "per:cities_of_residence": ("city", ["{h} lives in {t} with two dogs .",
                                         "{h} , a {t} resident , opposed the vote ."]),
    "per:country_of_birth": ("country", ["{h} was born in {t} .",
                                         "Born in {t} , {h} joined the team in May ."]),
    "per:country_of_death": ("country", ["{h} died in {t} while on tour .",
                                         "{h} passed away last year in {t} ."]),
    "per:countries_of_residence": ("country", ["{h} has lived in {t} since 2004 .",
                                               "{h} now resides in {t} ."]),
    "per:stateorprovince_of_birth": ("state", ["{h} was born in {t} .",
                                               "A {t} native , {h} studied law ."]),
    "per:stateorprovince_of_death": ("state", ["{h} died in {t} on Friday .",
                                               "{h} passed away at a clinic in {t} ."]),
    "per:stateorprovinces_of_residence": ("state", ["{h} lives in {t} .",
                                                    "{h} moved to {t} in 1999 ."]),
    "per:title": ("title", ["{h} , the {t} , declined to comment .",
                            "{t} {h} opened the meeting ."]),
    "per:employee_of": ("org", ["{h} works for {t} .",
                                "{h} , an engineer at {t} , filed the patent ."]),
    "per:schools_attended": ("school", ["{h} graduated from {t} .",
                                        "{h} studied history at {t} ."]),
    "per:religion": ("religion", ["{h} is a devout {t} .",
                                  "{h} , who is {t} , spoke at the service ."]),
    "per:origin": ("origin", ["{h} is {t} .",
                              "The {t} writer {h} won the prize ."]),
    "per:charges": ("charge", ["{h} was charged with {t} .",
                               "{h} pleaded not guilty to {t} ."]),
    "per:alternate_names": ("nickname", ["{h} , known as {t} , sang first .",
                                         "Friends call {h} {t} ."]),
    "per:parents": ("person", ["{h} is the daughter of {t} .",
                               "{h} , son of {t} , inherited the farm ."]),
    "per:children": ("person", ["{h} is survived by a son , {t} .",
                                "{h} and her daughter {t} attended ."]),
    "per:siblings": ("person", ["{h} and his brother {t} founded a band .",
                                "{h} , sister of {t} , testified ."]),
    "per:spouse": ("person", ["{h} married {t} in 1995 .",
                              "{h} and her husband {t} live nearby ."]),
    "per:other_family": ("person", ["{h} is a cousin of {t} .",
                                    "{h} , whose uncle is {t} , spoke ."]),
    "org:founded": ("date", ["{h} was founded in {t} .",
                             "Established in {t} , {h} now has 40 stores ."]),
    "org:dissolved": ("date", ["{h} was dissolved in {t} .",
                               "{h} closed its doors in {t} ."]),
    "org:founded_by": ("person", ["{h} was founded by {t} .",
                                  "{t} started {h} in a garage ."]),
    "org:top_members/employees": ("person", ["{t} , chief executive of {h} , resigned .",
                                             "{h} chairman {t} announced the deal ."]),
    "org:members": ("org", ["{h} counts {t} among its members .",
                            "{t} joined {h} last year ."]),
    "org:member_of": ("org", ["{h} is a member of {t} .",
                              "{h} joined {t} in 2010 ."]),
    "org:parents": ("org", ["{h} is a unit of {t} .",
                            "{t} owns {h} outright ."]),
    "org:subsidiaries": ("org", ["{h} owns {t} .",
                                 "{h} bought {t} for $ 2 billion ."]),
    "org:shareholders": ("person", ["{t} holds a stake in {h} .",
                                    "{t} bought shares of {h} ."]),
    "org:alternate_names": ("alias", ["{h} , also known as {t} , grew fast .",
                                      "{h} ( {t} ) reported a loss ."]),
    "org:website": ("website", ["{h} posted the notice on {t} .",
                                "Details are on the {h} site {t} ."]),
    "org:number_of_employees/members": ("number", ["{h} employs {t} people .",
                                                   "{h} has {t} members ."]),
    "org:political/religious_affiliation": ("affiliation", ["{h} is a {t} group .",
                                                            "The {t} organization {h} protested ."]),
    "org:city_of_headquarters": ("city", ["{h} is based in {t} .",
                                          "Based in {t} , {h} cut 200 jobs ."]),
    "org:country_of_headquarters": ("country", ["{h} is headquartered in {t} .",
                                                "{h} , based in {t} , exports grain ."]),
    "org:stateorprovince_of_headquarters": ("state", ["{h} has its headquarters in {t} .",
                                                      "{h} is based in {t} ."]),
    "no_relation": ("city", ["{h} visited {t} twice last year .",
                             "{h} spoke about {t} on the radio ."]),
}


def main() -> int:
    catalog = json.loads(CATALOG.read_text())["tacred"]
    missing = set(catalog) - set(FRAMES)
    if missing:
        print(f"frames missing for {sorted(missing)}", file=sys.stderr)
        return 1

    rng = random.Random(20240101)
    records = []
    for relation in catalog:
        kind, frames = FRAMES[relation]
        heads = ORGS if relation.startswith("org:") else PEOPLE
        for i in range(PER_RELATION):
            head = heads[(i * 7 + len(relation)) % len(heads)]
            tail = TAILS[kind][(i * 5 + rng.randrange(3)) % len(TAILS[kind])]
            if tail == head:
                tail = TAILS[kind][(i * 5 + 1) % len(TAILS[kind])]
            frame = frames[i % len(frames)]
            tokens, spans = [], {}
            for piece in frame.split():
                if piece in ("{h}", "{t}"):
                    words = (head if piece == "{h}" else tail).split()
                    spans[piece] = (len(tokens), len(tokens) + len(words) - 1)
                    tokens.extend(words)
                else:
                    tokens.append(piece)
            h_span, t_span = spans["{h}"], spans["{t}"]
            records.append({
                "id": f"synth-{relation}-{i:02d}",
                "relation": relation,
                "token": tokens,
                "subj_start": h_span[0],
                "subj_end": h_span[1],
                "obj_start": t_span[0],
                "obj_end": t_span[1],
            })

    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as f:
        f.write("[\n")
        f.write(",\n".join(json.dumps(r) for r in records))
        f.write("\n]\n")
    print(f"wrote {len(records)} records to {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
