"""Deterministic synthetic form corpora in FUNSD / XFUND annotation format.

The sandbox and CI have no access to the real scanned-form datasets, so this
module fabricates structurally faithful stand-ins: pages of question/answer
ladders with section headers, occasional unanswered header-linked questions,
and decorative "other" entities, serialized in the exact JSON schemas the
loaders consume.  Layouts are disciplined so that the rule-regenerated gold
graphs are feasible under the default decoding constraints and every gold
edge falls inside the default candidate neighborhood; each emitted document
is validated through the real ingestion pipeline and resampled on the rare
failure.

Word text is decorative (the model never reads it); per-language profiles
vary glyph widths, word lengths, entity-length biases and page sizes so that
zero-shot transfer is meaningful but not trivial.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .convert import erg_to_wrg, verify_constraints, wrg_to_erg
from .graphs import canonicalize_erg
from .ingest import (
    DEFAULT_NEIGHBORHOOD,
    annotate,
    build_neighborhood,
    edge_coverage,
    _parse_items,
)

MAX_LINE_WORDS = 8
MAX_LINK_GAP = 8        # header-question links farther than this are not emitted
MAX_RETRIES = 60
PAIR_GAP = (30.0, 64.0)
QA_GAP = (10.0, 26.0)


@dataclass(frozen=True)
class LanguageProfile:
    language: str
    page: tuple[int, int]
    char_width: tuple[float, float]
    word_height: tuple[int, int]
    word_chars: tuple[int, int]
    answer_len_weights: tuple[float, ...]   # P(answer has 1..3 words)
    question_len_weights: tuple[float, ...]
    questions: tuple[str, ...]
    answers: tuple[str, ...]
    headers: tuple[str, ...]
    others: tuple[str, ...]


PROFILES: dict[str, LanguageProfile] = {
    "en": LanguageProfile(
        "en", (850, 1100), (6.2, 8.6), (14, 18), (3, 9),
        (0.35, 0.40, 0.25), (0.40, 0.40, 0.20),
        ("Name:", "Date:", "Address:", "City:", "Phone:", "Brand:", "Title:",
         "Division:", "Region:", "Subject:", "From:", "To:", "Total:", "Code:",
         "Account", "Number:", "Contact", "Approved", "By:", "Type:"),
        ("John", "Smith", "Winston", "Salem", "Richmond", "120", "1987", "Main",
         "Street", "Marketing", "Box", "A-12", "74", "None", "Yes", "No",
         "Louisville", "Menthol", "Filter", "85mm", "October", "Friday"),
        ("SHIPPING", "BILLING", "APPROVAL", "DETAILS", "SUMMARY", "RECIPIENT",
         "DISTRIBUTION", "SPECIFICATIONS"),
        ("Page", "1", "2", "Form", "Rev.", "Confidential", "RJR-0421", "Copy"),
    ),
    "zh": LanguageProfile(
        "zh", (800, 1131), (15.0, 20.0), (16, 20), (1, 3),
        (0.55, 0.35, 0.10), (0.55, 0.35, 0.10),
        ("姓名", "日期", "地址", "城市", "电话", "部门", "编号", "职务", "金额",
         "单位", "类型", "备注"),
        ("北京", "上海", "王伟", "李娜", "二零二一", "三号", "有限公司", "人民路",
         "十二", "无", "是", "否"),
        ("基本信息", "审批", "联系方式", "明细"),
        ("第一页", "机密", "表格"),
    ),
    "ja": LanguageProfile(
        "ja", (820, 1160), (14.0, 19.0), (15, 19), (1, 4),
        (0.50, 0.38, 0.12), (0.50, 0.38, 0.12),
        ("氏名", "日付", "住所", "電話", "部署", "番号", "役職", "金額", "種別"),
        ("東京", "大阪", "田中", "佐藤", "株式会社", "丸の内", "十五", "なし",
         "はい", "いいえ"),
        ("基本情報", "承認", "連絡先"),
        ("ページ", "1", "社外秘"),
    ),
    "de": LanguageProfile(
        "de", (826, 1169), (6.0, 8.4), (14, 18), (4, 10),
        (0.30, 0.42, 0.28), (0.35, 0.42, 0.23),
        ("Name:", "Datum:", "Anschrift:", "Stadt:", "Telefon:", "Abteilung:",
         "Betreff:", "Nummer:", "Betrag:", "Kennzeichen:", "Von:", "An:"),
        ("Berlin", "München", "Schmidt", "Müller", "Hauptstraße", "42", "1993",
         "Vertrieb", "Keine", "Ja", "Nein", "Bericht"),
        ("VERSAND", "GENEHMIGUNG", "ZUSAMMENFASSUNG", "EMPFÄNGER"),
        ("Seite", "1", "Vertraulich", "Formular"),
    ),
    "fr": LanguageProfile(
        "fr", (826, 1169), (6.0, 8.2), (14, 18), (3, 10),
        (0.35, 0.40, 0.25), (0.40, 0.40, 0.20),
        ("Nom:", "Date:", "Adresse:", "Ville:", "Téléphone:", "Service:",
         "Objet:", "Numéro:", "Montant:", "De:", "À:", "Référence:"),
        ("Paris", "Lyon", "Durand", "Martin", "rue", "Victor", "Hugo", "75011",
         "Aucun", "Oui", "Non", "Mars"),
        ("EXPÉDITION", "APPROBATION", "RÉSUMÉ", "DESTINATAIRE"),
        ("Page", "1", "Confidentiel"),
    ),
    "es": LanguageProfile(
        "es", (826, 1169), (6.1, 8.3), (14, 18), (3, 10),
        (0.35, 0.40, 0.25), (0.40, 0.40, 0.20),
        ("Nombre:", "Fecha:", "Dirección:", "Ciudad:", "Teléfono:", "Área:",
         "Asunto:", "Número:", "Importe:", "De:", "Para:", "Referencia:"),
        ("Madrid", "Sevilla", "García", "López", "calle", "Mayor", "28013",
         "Ninguno", "Sí", "No", "Enero", "Informe"),
        ("ENVÍO", "APROBACIÓN", "RESUMEN", "DESTINATARIO"),
        ("Página", "1", "Confidencial"),
    ),
    "it": LanguageProfile(
        "it", (826, 1169), (6.1, 8.3), (14, 18), (3, 10),
        (0.35, 0.40, 0.25), (0.40, 0.40, 0.20),
        ("Nome:", "Data:", "Indirizzo:", "Città:", "Telefono:", "Reparto:",
         "Oggetto:", "Numero:", "Importo:", "Da:", "A:", "Riferimento:"),
        ("Roma", "Milano", "Rossi", "Bianchi", "via", "Garibaldi", "00184",
         "Nessuno", "Sì", "No", "Aprile", "Relazione"),
        ("SPEDIZIONE", "APPROVAZIONE", "RIEPILOGO", "DESTINATARIO"),
        ("Pagina", "1", "Riservato"),
    ),
    "pt": LanguageProfile(
        "pt", (826, 1169), (6.1, 8.3), (14, 18), (3, 10),
        (0.35, 0.40, 0.25), (0.40, 0.40, 0.20),
        ("Nome:", "Data:", "Endereço:", "Cidade:", "Telefone:", "Setor:",
         "Assunto:", "Número:", "Valor:", "De:", "Para:", "Referência:"),
        ("Lisboa", "Porto", "Silva", "Santos", "rua", "Augusta", "1100",
         "Nenhum", "Sim", "Não", "Junho", "Relatório"),
        ("ENVIO", "APROVAÇÃO", "RESUMO", "DESTINATÁRIO"),
        ("Página", "1", "Confidencial"),
    ),
}

XFUND_LANGUAGES = ("zh", "ja", "de", "fr", "es", "it", "pt")


@dataclass
class _WordSpec:
    text: str
    width: int
    height: int


@dataclass
class _EntitySpec:
    label: str
    words: list[_WordSpec]

    @property
    def n_words(self) -> int:
        return len(self.words)

    @property
    def px(self) -> float:
        return sum(w.width for w in self.words) + 21.0 * (len(self.words) - 1)


@dataclass
class _PairSpec:
    question: _EntitySpec
    answer: _EntitySpec | None      # None: unanswered (header-linked) question


@dataclass
class _BlockSpec:
    header: _EntitySpec | None
    pairs: list[_PairSpec]


class _Generator:
    """Plans a document as header/ladder blocks, then lays out lines obeying
    the gold-feasibility discipline: every non-final line ends with a question
    whose answer opens the next ladder line, and every inline entity is
    followed on its own line by a question."""

    def __init__(self, profile: LanguageProfile, rng: np.random.Generator):
        self.p = profile
        self.rng = rng
        self.items: list[dict] = []
        self.word_count = 0             # retained (graph) words emitted so far
        self.first_word_idx: dict[int, int] = {}

    # -- sampling ------------------------------------------------------------

    def _word(self, pool) -> _WordSpec:
        p = self.p
        text = pool[int(self.rng.integers(len(pool)))]
        chars = int(self.rng.integers(p.word_chars[0], p.word_chars[1] + 1))
        cw = self.rng.uniform(*p.char_width)
        width = max(8, int(round(chars * cw * self.rng.uniform(0.9, 1.1))))
        height = int(self.rng.integers(p.word_height[0], p.word_height[1] + 1))
        return _WordSpec(text=text, width=width, height=height)

    def _entity(self, label: str, pool, n: int) -> _EntitySpec:
        return _EntitySpec(label=label, words=[self._word(pool) for _ in range(n)])

    def _length(self, weights) -> int:
        w = np.array(weights, dtype=np.float64)
        return 1 + int(self.rng.choice(len(w), p=w / w.sum()))

    def plan(self) -> list[_BlockSpec]:
        p = self.p
        blocks = []
        budget = 24  # total QA pairs per page, keeps layouts inside the page
        for _ in range(int(self.rng.integers(3, 6))):
            n_pairs = min(int(self.rng.integers(3, 8)), budget)
            if n_pairs < 2:
                break
            budget -= n_pairs
            header = self._entity("header", p.headers, 1) if self.rng.random() < 0.6 else None
            pairs = []
            for _ in range(n_pairs):
                q = self._entity("question", p.questions,
                                 self._length(p.question_len_weights))
                a = self._entity("answer", p.answers,
                                 self._length(p.answer_len_weights))
                pairs.append(_PairSpec(question=q, answer=a))
            if header is not None and self.rng.random() < 0.30:
                pairs.insert(1, _PairSpec(
                    question=self._entity("question", p.questions, 1), answer=None))
            blocks.append(_BlockSpec(header=header, pairs=pairs))
        # a question that trails into a header line cannot carry a same-entity
        # chain (nothing may continue it), so force it to a single word
        for blk, nxt in zip(blocks, blocks[1:]):
            if nxt.header is not None and blk.pairs:
                del blk.pairs[-1].question.words[1:]
        return blocks

    # -- geometry ------------------------------------------------------------

    def _intra_gap(self) -> float:
        if self.rng.random() < 0.10:    # typewriter-ish wide spacing
            return self.rng.uniform(10.0, 21.0)
        return self.rng.uniform(4.0, 11.0)

    def _place(self, ent: _EntitySpec, x: float, line_y: float) -> tuple[int, float]:
        boxes, words = [], []
        for widx, w in enumerate(ent.words):
            if widx:
                x += self._intra_gap()
            y0 = line_y + self.rng.uniform(-1.5, 1.5)
            box = [int(round(x)), int(round(y0)),
                   int(round(x + w.width)), int(round(y0 + w.height))]
            words.append({"text": w.text, "box": box})
            boxes.append(box)
            x += w.width
        item_id = len(self.items)
        self.items.append({"id": item_id, "label": ent.label,
                           "box": [min(b[0] for b in boxes), min(b[1] for b in boxes),
                                   max(b[2] for b in boxes), max(b[3] for b in boxes)],
                           "words": words, "linking": []})
        if ent.label != "other":
            self.first_word_idx[item_id] = self.word_count
            self.word_count += ent.n_words
        return item_id, x

    def _link(self, src: int, dst: int) -> None:
        self.items[src]["linking"].append([src, dst])
        self.items[dst]["linking"].append([src, dst])

    def layout(self, blocks: list[_BlockSpec]) -> None:
        page_w, _ = self.p.page
        margin = 46.0
        eff_right = page_w - margin
        y = 50.0

        def new_line(extra: float = 0.0) -> float:
            nonlocal y
            y += self.rng.uniform(24, 32) + extra
            return y

        pending: tuple[_EntitySpec, int] | None = None
        last_block = len(blocks) - 1
        for bidx, block in enumerate(blocks):
            header_id = None
            if block.header is not None:
                hx = margin + self.rng.uniform(0, 30)
                header_id, _ = self._place(block.header, hx,
                                           new_line(extra=self.rng.uniform(8, 18)))
            header_wants_link = header_id is not None
            queue = list(block.pairs)
            while queue:
                line_y = new_line()
                x = margin + self.rng.uniform(0, 14)
                words_on_line = 0
                if pending is not None:
                    ans, qid = pending
                    aid, x = self._place(ans, x, line_y)
                    self._link(qid, aid)
                    words_on_line += ans.n_words
                    pending = None

                def attach_header(qid: int) -> None:
                    nonlocal header_wants_link
                    if header_wants_link:
                        self._link(header_id, qid)
                        header_wants_link = False
                    elif (header_id is not None and self.rng.random() < 0.30
                          and self.first_word_idx[qid] - self.first_word_idx[header_id]
                          <= MAX_LINK_GAP):
                        self._link(header_id, qid)

                while queue:
                    pair = queue[0]
                    q, a = pair.question, pair.answer
                    if a is None:
                        # unanswered question: inline only, must be followed by
                        # another question on this line and stay within the
                        # header's link range
                        gap_ok = (header_id is not None
                                  and self.word_count - self.first_word_idx[header_id]
                                  <= MAX_LINK_GAP)
                        fits = (words_on_line + q.n_words + queue[1].question.n_words
                                <= MAX_LINE_WORDS
                                and x + PAIR_GAP[1] + q.px + PAIR_GAP[1]
                                + queue[1].question.px < eff_right)
                        queue.pop(0)
                        if gap_ok and fits and len(queue) >= 1:
                            if words_on_line:
                                x += self.rng.uniform(*PAIR_GAP)
                            qid, x = self._place(q, x, line_y)
                            self._link(header_id, qid)
                            words_on_line += q.n_words
                        continue
                    unit_words = q.n_words + a.n_words
                    is_doc_final = bidx == last_block and len(queue) == 1
                    reserve_words = 0 if is_doc_final else (
                        queue[1].question.n_words if len(queue) > 1 else 3)
                    reserve_px = 0.0 if is_doc_final else (
                        PAIR_GAP[1] + (queue[1].question.px if len(queue) > 1 else 300.0))
                    lead = PAIR_GAP[1] if words_on_line else 0.0
                    fits = (words_on_line + unit_words + reserve_words <= MAX_LINE_WORDS
                            and x + lead + q.px + QA_GAP[1] + a.px + reserve_px < eff_right)
                    inline = fits and (is_doc_final and words_on_line > 0
                                       or len(queue) > 1 and self.rng.random() < 0.62)
                    if inline:
                        if words_on_line:
                            x += self.rng.uniform(*PAIR_GAP)
                        qid, x = self._place(q, x, line_y)
                        attach_header(qid)
                        x += self.rng.uniform(*QA_GAP)
                        aid, x = self._place(a, x, line_y)
                        self._link(qid, aid)
                        words_on_line += unit_words
                        queue.pop(0)
                        if is_doc_final:
                            break
                    else:
                        if words_on_line:
                            x += self.rng.uniform(*PAIR_GAP)
                        qid, x = self._place(q, x, line_y)
                        attach_header(qid)
                        pending = (a, qid)
                        queue.pop(0)
                        break

        if pending is not None:   # document-final answer on its own line
            ans, qid = pending
            aid, _ = self._place(ans, margin + self.rng.uniform(0, 14), new_line())
            self._link(qid, aid)

        # decorative non-graph content, dropped by the loader
        top_y, bottom_y = 16.0, y + self.rng.uniform(42, 60)
        for k in range(int(self.rng.integers(0, 4))):
            ent = self._entity("other", self.p.others, int(self.rng.integers(1, 3)))
            line_y = top_y if k % 2 == 0 else bottom_y
            self._place(ent, margin + 170.0 * (k // 2), line_y)

    def build(self) -> dict:
        self.items = []
        self.word_count = 0
        self.first_word_idx = {}
        self.layout(self.plan())
        for item in self.items:
            links = sorted({(u, v) for u, v in item["linking"]})
            item["linking"] = [list(l) for l in links]
        return {"form": self.items, "width": self.p.page[0], "height": self.p.page[1]}


def _validate(items: list[dict], doc_id: str, profile: LanguageProfile,
              k: int = DEFAULT_NEIGHBORHOOD) -> bool:
    """Run emitted items through the real pipeline and require the gold
    guarantees: full neighborhood coverage, zero constraint violations, and
    an exact conversion round trip."""
    try:
        document, erg, _ = _parse_items(items, doc_id, float(profile.page[0]),
                                        float(profile.page[1]), profile.language)
        ann = annotate(document, erg)
    except Exception:
        return False
    if len(document.words) < 12:
        return False
    nbhd = build_neighborhood(document, k)
    covered, total = edge_coverage(ann.gold_wrg, nbhd)
    if covered != total or total == 0:
        return False
    counts = verify_constraints(ann.gold_wrg, nbhd)
    if counts.total != 0 or counts.uncovered_edges != 0:
        return False
    try:
        back = wrg_to_erg(erg_to_wrg(ann.gold_erg), document)
    except Exception:
        return False
    return canonicalize_erg(back) == canonicalize_erg(ann.gold_erg)


def generate_form(doc_id: str, language: str = "en", seed: int = 0,
                  index: int = 0) -> dict:
    """One synthetic FUNSD-format annotation (validated, deterministic)."""
    profile = PROFILES[language]
    for retry in range(MAX_RETRIES):
        rng = np.random.default_rng([seed, index, retry])
        doc = _Generator(profile, rng).build()
        if _validate(doc["form"], doc_id, profile):
            return doc
    raise RuntimeError(f"could not generate a valid document for {doc_id}")


def generate_funsd_corpus(root: Path | str, n_train: int = 149, n_test: int = 50,
                          seed: int = 0) -> None:
    """FUNSD-style tree: training_data/annotations/*.json + testing_data/..."""
    root = Path(root)
    for split, count, offset in (("training_data", n_train, 0),
                                 ("testing_data", n_test, 10_000)):
        folder = root / split / "annotations"
        folder.mkdir(parents=True, exist_ok=True)
        for k in range(count):
            doc_id = f"{offset + k:08d}"
            doc = generate_form(doc_id, "en", seed=seed, index=offset + k)
            (folder / f"{doc_id}.json").write_text(
                json.dumps(doc, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False) + "\n")


def generate_xfund_corpus(root: Path | str, languages=XFUND_LANGUAGES,
                          n_test: int = 50, seed: int = 0) -> None:
    """XFUND-style per-language test partitions: <lang>.val.json files."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for lang in languages:
        docs = []
        for k in range(n_test):
            doc_id = f"{lang}_val_{k:04d}"
            form = generate_form(doc_id, lang, seed=seed + 7,
                                 index=100_000 + XFUND_LANGUAGES.index(lang) * 1000 + k)
            docs.append({
                "id": doc_id,
                "img": {"fname": f"{doc_id}.png", "width": form["width"],
                        "height": form["height"]},
                "document": form["form"],
            })
        (root / f"{lang}.val.json").write_text(
            json.dumps({"documents": docs}, sort_keys=True,
                       separators=(",", ":"), ensure_ascii=False) + "\n")
