#include "vulnlink/annotate.hpp"
#include "vulnlink/corpus.hpp"
#include "vulnlink/embedding.hpp"
#include "vulnlink/error.hpp"
#include "vulnlink/metrics.hpp"
#include "vulnlink/pipeline.hpp"
#include "vulnlink/preproc.hpp"
#include "vulnlink/service.hpp"
#include "vulnlink/similarity.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

namespace py = pybind11;
using namespace vulnlink;

namespace {

using PyRanking = std::vector<std::pair<std::string, double>>;
using PyRankings = std::map<std::string, PyRanking>;
using PyTruth = std::map<std::string, std::vector<std::string>>;

py::object from_json(const std::string& text) {
    return py::module_::import("json").attr("loads")(text);
}

// Attack IDs follow their prefix; anything else (group-technique pairs)
// is a procedure.
EntryId attack_from(const std::string& raw) {
    auto kind = infer_kind(raw);
    return EntryId::make(kind.value_or(EntryKind::Procedure), raw);
}

EntryId any_from(const std::string& raw) {
    auto kind = infer_kind(raw);
    if (!kind) {
        throw CorpusError("cannot infer the kind of '" + raw + "'");
    }
    return EntryId::make(*kind, raw);
}

Ranking to_ranking(const PyRanking& items) {
    Ranking r;
    for (const auto& [cve, score] : items) {
        r.push_back({EntryId::cve(cve), score});
    }
    sort_ranking(r);
    return r;
}

PyRanking from_ranking(const Ranking& r) {
    PyRanking out;
    for (const auto& item : r) {
        out.emplace_back(item.cve.raw, item.score);
    }
    return out;
}

std::vector<std::string> raws(const std::set<EntryId>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
        out.push_back(id.raw);
    }
    return out;
}

std::vector<ScoredAttack> to_attacks(const PyRankings& rankings) {
    std::vector<ScoredAttack> out;
    for (const auto& [attack, items] : rankings) {
        out.push_back({attack_from(attack), to_ranking(items)});
    }
    return out;
}

GroundTruthMap to_truth(const PyTruth& truth) {
    GroundTruthMap out;
    for (const auto& [attack, cves] : truth) {
        auto& set = out.links[attack_from(attack)];
        for (const auto& c : cves) {
            set.insert(EntryId::cve(c));
        }
    }
    return out;
}

SweepConfig sweep_config(const std::optional<std::vector<double>>& grid, std::optional<std::size_t> k, bool inclusive) {
    SweepConfig c;
    c.grid = grid.value_or(std::vector<double>{});
    c.k = k;
    c.mode = inclusive ? ThresholdMode::Inclusive : ThresholdMode::Strict;
    return c;
}

py::list curve_list(const std::vector<CurvePoint>& curve) {
    py::list out;
    for (const auto& p : curve) {
        py::dict d;
        d["rho"] = p.rho;
        d["tpr"] = p.tpr;
        d["fpr"] = p.fpr;
        d["precision"] = p.precision;
        d["recall"] = p.recall;
        d["tp"] = p.counts.tp;
        d["fp"] = p.counts.fp;
        d["fn"] = p.counts.fn;
        d["tn"] = p.counts.tn;
        out.append(d);
    }
    return out;
}

py::dict summary_dict(const Summary& s) {
    py::dict d;
    d["count"] = s.count;
    d["min"] = s.min;
    d["q1"] = s.q1;
    d["median"] = s.median;
    d["q3"] = s.q3;
    d["max"] = s.max;
    d["mean"] = s.mean;
    return d;
}

RunConfig run_config(const std::vector<std::string>& corpus, const std::string& out, const std::string& provider,
                     const std::string& sim, double rho, std::size_t k, bool inclusive, bool direction_strict,
                     bool title_concat, std::uint64_t seed) {
    RunConfig c;
    c.corpus = corpus;
    c.out = out;
    c.provider = provider;
    auto kind = parse_similarity(sim);
    if (!kind) {
        throw PreconditionError("unknown similarity '" + sim + "'");
    }
    c.sim = *kind;
    c.rho = rho;
    c.k = k;
    c.inclusive = inclusive;
    c.direction_strict = direction_strict;
    c.title_concat = title_concat;
    c.seed = seed;
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Links attack descriptions to CVEs by explicit-link chains and embedding similarity.";

    // Lives as long as the interpreter; the translator raises instances
    // carrying the library's error code.
    static PyObject* error_type = PyErr_NewException("vulnlink._core.VulnlinkError", PyExc_RuntimeError, nullptr);
    m.add_object("VulnlinkError", py::handle(error_type));
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("code") = e.code();
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    py::class_<Corpus>(m, "Corpus")
        .def_static(
            "load",
            [](const std::string& path) { return parse_corpus_file(path).corpus; },
            py::arg("path"), "Parse a JSONL corpus file; malformed lines are skipped.")
        .def("__len__", &Corpus::size)
        .def("counts",
             [](const Corpus& c) {
                 std::map<std::string, std::size_t> out;
                 for (const auto& [kind, n] : c.counts()) {
                     out[std::string(to_string(kind))] = n;
                 }
                 return out;
             })
        .def("ids",
             [](const Corpus& c, const std::string& kind) {
                 auto k = parse_kind(kind);
                 if (!k) {
                     throw PreconditionError("unknown kind '" + kind + "'");
                 }
                 std::vector<std::string> out;
                 for (const auto& id : c.ids_of_kind(*k)) {
                     out.push_back(id.raw);
                 }
                 return out;
             },
             py::arg("kind"))
        .def(
            "text",
            [](const Corpus& c, const std::string& raw) {
                const auto* e = c.find_raw(raw);
                if (e == nullptr) {
                    throw LookupError("unknown entry '" + raw + "'");
                }
                return e->raw_text;
            },
            py::arg("id"));

    m.def(
        "annotate",
        [](const Corpus& corpus, const std::string& attack, bool direction_strict) {
            const auto* entry = corpus.find_raw(attack);
            if (entry == nullptr) {
                throw LookupError("unknown entry '" + attack + "'");
            }
            auto a = annotate_attack(build_link_graph(corpus), entry->id, {direction_strict, true});
            std::map<std::string, std::vector<std::vector<std::string>>> chains;
            for (const auto& [cve, list] : a.provenance) {
                for (const auto& chain : list) {
                    std::vector<std::string> ids;
                    for (const auto& id : chain) {
                        ids.push_back(id.raw);
                    }
                    chains[cve.raw].push_back(std::move(ids));
                }
            }
            py::dict out;
            out["cves"] = raws(a.cves);
            out["chains"] = chains;
            return out;
        },
        py::arg("corpus"), py::arg("attack"), py::arg("direction_strict") = false,
        "Ground-truth CVEs of one attack, with the chains that reach them.");

    m.def(
        "annotate_all",
        [](const Corpus& corpus, bool direction_strict) {
            auto r = annotate_all(build_link_graph(corpus), corpus, {direction_strict, false});
            std::map<std::string, std::vector<std::string>> out;
            for (const auto& [attack, cves] : r.truth.links) {
                out[attack.raw] = raws(cves);
            }
            return out;
        },
        py::arg("corpus"), py::arg("direction_strict") = false);

    m.def(
        "clean_text",
        [](const std::string& raw) {
            auto r = clean_text(raw);
            py::dict report;
            report["removed_urls"] = r.report.removed_urls;
            report["removed_citations"] = r.report.removed_citations;
            report["removed_markup"] = r.report.removed_markup;
            report["removed_symbols"] = r.report.removed_symbols;
            report["chars_in"] = r.report.chars_in;
            report["chars_out"] = r.report.chars_out;
            return py::make_tuple(r.text, report);
        },
        py::arg("text"));

    m.def(
        "extract_cve_ids",
        [](const std::string& text) {
            std::vector<std::string> out;
            for (const auto& id : extract_cve_ids(text)) {
                out.push_back(id.raw);
            }
            return out;
        },
        py::arg("text"));

    m.def(
        "test_embed", [](const std::string& text, std::size_t dim) { return test_embed(text, dim).values; },
        py::arg("text"), py::arg("dim"), "Deterministic hashed bag-of-words embedding, L2-normalized.");

    m.def(
        "cosine",
        [](std::vector<float> a, std::vector<float> b) {
            return cosine(EmbeddingVector{std::move(a)}, EmbeddingVector{std::move(b)});
        },
        py::arg("a"), py::arg("b"));

    py::class_<EmbeddingStore>(m, "EmbeddingStore")
        .def(py::init<std::string, std::size_t, bool>(), py::arg("provider"), py::arg("dim"),
             py::arg("normalized") = true)
        .def_static("load", &load_store, py::arg("path"))
        .def("save", [](const EmbeddingStore& s, const std::string& path) { save_store(s, path); }, py::arg("path"))
        .def(
            "put",
            [](EmbeddingStore& s, const std::string& id, std::vector<float> v) {
                s.put(any_from(id), EmbeddingVector{std::move(v)});
            },
            py::arg("id"), py::arg("vector"))
        .def(
            "get", [](const EmbeddingStore& s, const std::string& id) { return s.at(any_from(id)).values; },
            py::arg("id"))
        .def("__len__", &EmbeddingStore::size)
        .def_property_readonly("dim", &EmbeddingStore::dim)
        .def_property_readonly("provider", &EmbeddingStore::provider_name)
        .def_property_readonly("normalized", &EmbeddingStore::is_normalized)
        .def(
            "rank",
            [](const EmbeddingStore& s, std::vector<float> query, const std::string& sim) {
                auto kind = parse_similarity(sim);
                if (!kind) {
                    throw PreconditionError("unknown similarity '" + sim + "'");
                }
                EmbeddingVector q{std::move(query)};
                if (s.is_normalized()) {
                    q = normalized(std::move(q));
                }
                return from_ranking(rank_cves(q, s, *kind));
            },
            py::arg("query"), py::arg("sim") = "cosine", "All stored CVEs, best first.");

    m.def(
        "predict",
        [](const PyRanking& ranking, double rho, std::optional<std::size_t> k, bool inclusive) {
            return from_ranking(
                cut_ranking(to_ranking(ranking), rho, k, inclusive ? ThresholdMode::Inclusive : ThresholdMode::Strict));
        },
        py::arg("ranking"), py::arg("rho") = 58.0, py::arg("k") = py::none(), py::arg("inclusive") = false,
        "Top-k of the ranking, then the threshold on the 0-100 scale.");

    m.def(
        "prf",
        [](std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
            auto p = prf({tp, fp, fn, tn});
            py::dict d;
            d["precision"] = p.precision;
            d["recall"] = p.recall;
            d["f1"] = p.f1;
            d["degenerate"] = p.degenerate;
            return d;
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"), py::arg("tn") = 0);

    m.def("f1_score", &f1_score, py::arg("precision"), py::arg("recall"));

    m.def(
        "overlap",
        [](const std::vector<std::string>& predicted, const std::vector<std::string>& truth) {
            std::set<EntryId> l;
            std::set<EntryId> t;
            for (const auto& c : predicted) {
                l.insert(EntryId::cve(c));
            }
            for (const auto& c : truth) {
                t.insert(EntryId::cve(c));
            }
            auto o = overlap(l, t);
            py::dict d;
            d["jaccard"] = o.jaccard;
            d["mapping_acc"] = o.mapping_acc;
            d["detection_acc"] = o.detection_acc;
            d["degenerate"] = o.degenerate;
            return d;
        },
        py::arg("predicted"), py::arg("truth"));

    m.def(
        "roc_sweep",
        [](const PyRankings& rankings, const PyTruth& truth, std::optional<std::vector<double>> grid,
           std::optional<std::size_t> k, bool inclusive) {
            auto r = roc_sweep(to_attacks(rankings), to_truth(truth), sweep_config(grid, k, inclusive));
            py::dict d;
            d["auc"] = r.auc;
            d["rho_star"] = r.rho_star;
            d["curve"] = curve_list(r.curve);
            return d;
        },
        py::arg("rankings"), py::arg("truth"), py::arg("grid") = py::none(), py::arg("k") = py::none(),
        py::arg("inclusive") = false);

    m.def(
        "pr_sweep",
        [](const PyRankings& rankings, const PyTruth& truth, std::optional<std::vector<double>> grid,
           std::optional<std::size_t> k, bool inclusive) {
            auto r = pr_sweep(to_attacks(rankings), to_truth(truth), sweep_config(grid, k, inclusive));
            py::dict d;
            d["eer_rho"] = r.eer_rho;
            d["curve"] = curve_list(r.curve);
            return d;
        },
        py::arg("rankings"), py::arg("truth"), py::arg("grid") = py::none(), py::arg("k") = py::none(),
        py::arg("inclusive") = false);

    m.def(
        "topk_sweep",
        [](const PyRankings& rankings, const PyTruth& truth, const std::vector<std::size_t>& ks) {
            auto r = topk_sweep(to_attacks(rankings), to_truth(truth), ks);
            py::list points;
            for (const auto& p : r.points) {
                py::dict d;
                d["k"] = p.k;
                d["precision"] = summary_dict(p.precision);
                d["recall"] = summary_dict(p.recall);
                points.append(d);
            }
            py::dict d;
            d["crossing_k"] = r.crossing_k;
            d["points"] = points;
            return d;
        },
        py::arg("rankings"), py::arg("truth"), py::arg("ks"));

    m.def(
        "run_stage",
        [](const std::string& stage, const std::vector<std::string>& corpus, const std::string& out,
           const std::string& provider, const std::string& sim, double rho, std::size_t k, bool inclusive,
           bool direction_strict, bool title_concat, std::uint64_t seed) {
            auto config =
                run_config(corpus, out, provider, sim, rho, k, inclusive, direction_strict, title_concat, seed);
            auto s = run_stage(stage, config);
            py::dict d;
            d["stage"] = s.stage;
            d["config_digest"] = config_digest(config);
            d["artifacts"] = s.artifacts;
            d["summary"] = from_json(s.summary_json);
            return d;
        },
        py::arg("stage"), py::arg("corpus"), py::arg("out"), py::arg("provider") = "test:384",
        py::arg("sim") = "cosine", py::arg("rho") = 58.0, py::arg("k") = 20, py::arg("inclusive") = false,
        py::arg("direction_strict") = false, py::arg("title_concat") = false, py::arg("seed") = 42,
        "Run one pipeline stage; artifacts land in `out`.");

    py::class_<ServiceApi>(m, "Service")
        .def(py::init([](const std::vector<std::string>& corpus, const std::string& out, const std::string& provider,
                         const std::string& sim, double rho, std::size_t k, bool inclusive,
                         std::optional<std::string> reviewer_token, std::size_t min_reviewers) {
                 auto config = run_config(corpus, out, provider, sim, rho, k, inclusive, false, false, 42);
                 ServiceConfig sc;
                 sc.rho = rho;
                 sc.k = k;
                 sc.mode = inclusive ? ThresholdMode::Inclusive : ThresholdMode::Strict;
                 sc.sim = config.sim;
                 sc.reviewer_token = std::move(reviewer_token);
                 sc.consensus.min_reviewers = min_reviewers;
                 sc.verdict_log = (std::filesystem::path(out) / "verdicts.jsonl").string();
                 sc.snapshot_path = (std::filesystem::path(out) / "validation_snapshot.json").string();
                 return std::make_unique<ServiceApi>(load_service_data(config), sc);
             }),
             py::arg("corpus"), py::arg("out"), py::arg("provider") = "test:384", py::arg("sim") = "cosine",
             py::arg("rho") = 58.0, py::arg("k") = 20, py::arg("inclusive") = false,
             py::arg("reviewer_token") = py::none(), py::arg("min_reviewers") = 2,
             "Service over the artifacts of a finished pipeline run.")
        .def(
            "handle",
            [](ServiceApi& api, const std::string& method, const std::string& path, const std::string& body,
               std::map<std::string, std::string> query, std::map<std::string, std::string> headers) {
                auto r = api.handle({method, path, std::move(query), std::move(headers), body});
                return py::make_tuple(r.status, r.body, r.content_type);
            },
            py::arg("method"), py::arg("path"), py::arg("body") = "",
            py::arg("query") = std::map<std::string, std::string>{},
            py::arg("headers") = std::map<std::string, std::string>{}, "Returns (status, body, content_type).");
}
