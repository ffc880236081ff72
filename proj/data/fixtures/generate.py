import json
def doc(doc_id, sents, events):
    toks, ranges = [], []
    for s in sents:
        w = s.split(); ranges.append([len(toks), len(toks)+len(w)]); toks += w
    def find(text, nth=0):
        w = text.split(); hits=[i for i in range(len(toks)-len(w)+1) if toks[i:i+len(w)]==w]
        i = hits[nth]; return [i, i+len(w)-1]
    evs=[]
    for et, trig, args in events:
        t = trig if isinstance(trig, tuple) else (trig, 0)
        evs.append({"event_type": et, "trigger": find(*t),
                    "arguments": [{"role": r, "span": find(a)} for r, a in args]})
    return {"doc_id": doc_id, "tokens": toks, "sentences": ranges, "events": evs}

train = [
 doc("d01", ["Rebels attacked the convoy near Mosul .", "Two soldiers died ."],
     [("Attack","attacked",[("Attacker","Rebels"),("Target","the convoy"),("Place","Mosul")]),
      ("Die","died",[("Victim","Two soldiers"),("Place","Mosul")])]),
 doc("d02", ["A gunman shot Ahmed in Kabul ."],
     [("Attack","shot",[("Attacker","A gunman"),("Target","Ahmed"),("Place","Kabul")])]),
 doc("d03", ["Maria died in Paris on Monday .", "A drunk driver hit her car ."],
     [("Die","died",[("Victim","Maria"),("Place","Paris"),("Killer","A drunk driver")]),
      ("Attack","hit",[("Attacker","A drunk driver"),("Target","her car")])]),
 doc("d04", ["Militants bombed a market in Baghdad .", "The blast killed Omar and Hassan .", "Officials condemned it ."],
     [("Attack","bombed",[("Attacker","Militants"),("Target","a market"),("Place","Baghdad")]),
      ("Die","killed",[("Victim","Omar"),("Victim","Hassan"),("Place","Baghdad")])]),
 doc("d05", ["Troops fired on protesters in Homs .", "Nobody was hurt ."],
     [("Attack","fired",[("Attacker","Troops"),("Target","protesters"),("Place","Homs")])]),
 doc("d06", ["The pilot died when jets struck Aleppo .", "The jets returned to base ."],
     [("Die","died",[("Victim","The pilot"),("Place","Aleppo")]),
      ("Attack","struck",[("Attacker","jets"),("Target","Aleppo")])]),
 doc("d07", ["Pirates raided a tanker off Somalia .", "Pirates killed the captain .", "Police attacked their boat later ."],
     [("Attack","raided",[("Attacker","Pirates"),("Target","a tanker"),("Place","Somalia")]),
      ("Die","killed",[("Victim","the captain"),("Killer","Pirates")]),
      ("Attack","attacked",[("Attacker","Police"),("Target","their boat")])]),
 doc("d08", ["Lena died peacefully at home ."],
     [("Die","died",[("Victim","Lena"),("Place","home")])]),
]
with open("overfit.jsonl","w") as f:
    for d in train: f.write(json.dumps(d)+"\n")

multi = doc("m1", ["A man crashed his car into a crowd in Toronto .",
                   "He then stabbed a guard with a knife .",
                   "Police shot the man near the station .",
                   "The crash killed three pedestrians ."],
  [("Attack","crashed",[("Attacker","A man"),("Target","a crowd"),("Place","Toronto")]),
   ("Attack","stabbed",[("Attacker","He"),("Target","a guard"),("Instrument","a knife")]),
   ("Attack","shot",[("Attacker","Police"),("Target","the man"),("Place","the station")]),
   ("Die","killed",[("Victim","three pedestrians"),("Killer","A man"),("Place","Toronto")])])
with open("multi_event.jsonl","w") as f: f.write(json.dumps(multi)+"\n")

with open("templates.jsonl","w") as f:
    f.write(json.dumps({"event_type":"Attack","template":"<Attacker> attacked <Target> using <Instrument> at <Place>"})+"\n")
    f.write(json.dumps({"event_type":"Die","template":"<Victim> and <Victim> died at <Place> killed by <Killer>"})+"\n")

good = json.dumps(train[1])
bad = {
 "bad_json.jsonl": good+"\n{\"doc_id\": \"x\", \"tokens\": [\n",
 "bad_tiling.jsonl": json.dumps({"doc_id":"t","tokens":["a","b","c"],"sentences":[[0,1],[2,3]],"events":[]})+"\n",
 "bad_span.jsonl": json.dumps({"doc_id":"s","tokens":["a","b"],"sentences":[[0,2]],
     "events":[{"event_type":"Attack","trigger":[0,0],"arguments":[{"role":"Target","span":[1,5]}]}]})+"\n",
 "bad_trigger.jsonl": json.dumps({"doc_id":"g","tokens":["a",".","b"],"sentences":[[0,2],[2,3]],
     "events":[{"event_type":"Attack","trigger":[1,2],"arguments":[]}]})+"\n",
}
for k,v in bad.items(): open(k,"w").write(v)

# cross-check counts
n=same=0
for d in train:
    so=lambda i:[k for k,(a,b) in enumerate(d["sentences"]) if a<=i<b][0]
    for e in d["events"]:
        for a in e["arguments"]:
            n+=1; same+= so(a["span"][0])==so(e["trigger"][0])
print("args",n,"same",same, "events", sum(len(d["events"]) for d in train))
for d in train:
    for e in d["events"]:
        print(d["doc_id"], e["event_type"], [ (a["role"], " ".join(d["tokens"][a["span"][0]:a["span"][1]+1])) for a in e["arguments"]], d["tokens"][e["trigger"][0]])
