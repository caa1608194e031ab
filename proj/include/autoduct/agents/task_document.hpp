// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/context.hpp"
#include "autoduct/dataset.hpp"
#include "autoduct/error.hpp"
#include "autoduct/neural_net.hpp"
#include "autoduct/numeric.hpp"
#include "autoduct/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace autoduct::agents {

inline constexpr int kTaskFormatVersion = 1;

/// Declarative stand-in for a generated script: {version, kind, payload, provenance}.
struct TaskDocument {
    int version = kTaskFormatVersion;
    std::string kind; // model | train | evaluate
    nlohmann::json payload = nlohmann::json::object();
    nlohmann::json provenance = nlohmann::json::object();

    friend bool operator==(const TaskDocument&, const TaskDocument&) = default;
};

inline nlohmann::json to_json(const TaskDocument& d)
{
    return {{"version", d.version}, {"kind", d.kind}, {"payload", d.payload}, {"provenance", d.provenance}};
}

inline TaskDocument task_document_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw Error(Errc::schema_invalid, "task document must be a JSON object");
    for (const char* field : {"version", "kind", "payload"})
        if (!j.contains(field))
            throw Error(Errc::schema_invalid, std::string("task document lacks '") + field + "'");
    TaskDocument d;
    if (!j.at("version").is_number_integer() || !j.at("kind").is_string() || !j.at("payload").is_object())
        throw Error(Errc::schema_invalid, "task document fields have the wrong types");
    d.version = j.at("version").get<int>();
    d.kind = j.at("kind").get<std::string>();
    d.payload = j.at("payload");
    d.provenance = j.value("provenance", nlohmann::json::object());
    return d;
}

// ---------------------------------------------------------------------------
// Typed views; each parser is also the schema check for its kind.

struct ModelMember {
    MLPConfig config;
    std::uint64_t seed = 0;
};

struct ModelTask {
    std::vector<ModelMember> members;
};

struct TrainTask {
    TrainConfig train; // seed unused: member seeds come from the model task
    SplitFractions fractions;
    std::uint64_t split_seed = 0;
    fs::path dataset;
    fs::path model_spec;
    fs::path ensemble_dir;
};

struct EvaluateTask {
    std::vector<std::string> metrics;
    double level = 0.9545;
    std::vector<SliceSpec> slices;
    fs::path dataset;
    fs::path ensemble_dir;
    fs::path report_dir;
};

inline constexpr const char* kKnownMetrics[] = {"rmse", "mape", "rmspe", "ratio"};

namespace detail {

class SchemaReader {
public:
    SchemaReader(const nlohmann::json& root, std::string kind) : root_(root), kind_(std::move(kind)) {}

    const nlohmann::json& object(const nlohmann::json& parent, const std::string& key, const std::string& where) const
    {
        if (!parent.contains(key))
            fail(where + key + " is required");
        const auto& v = parent.at(key);
        if (!v.is_object())
            fail(where + key + " must be an object");
        return v;
    }

    double number(const nlohmann::json& parent, const std::string& key, const std::string& where) const
    {
        if (!parent.contains(key))
            fail(where + key + " is required");
        if (!parent.at(key).is_number())
            fail(where + key + " must be a number");
        return parent.at(key).get<double>();
    }

    long long integer(const nlohmann::json& parent, const std::string& key, const std::string& where) const
    {
        if (!parent.contains(key))
            fail(where + key + " is required");
        if (!parent.at(key).is_number_integer())
            fail(where + key + " must be an integer");
        return parent.at(key).get<long long>();
    }

    std::uint64_t seed(const nlohmann::json& parent, const std::string& key, const std::string& where) const
    {
        if (!parent.contains(key))
            fail(where + key + " is required");
        const auto& v = parent.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            fail(where + key + " must be a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::string string(const nlohmann::json& parent, const std::string& key, const std::string& where) const
    {
        if (!parent.contains(key))
            fail(where + key + " is required");
        if (!parent.at(key).is_string() || parent.at(key).get<std::string>().empty())
            fail(where + key + " must be a non-empty string");
        return parent.at(key).get<std::string>();
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw Error(Errc::schema_invalid, kind_ + " task: " + what);
    }

    const nlohmann::json& root() const noexcept { return root_; }

private:
    const nlohmann::json& root_;
    std::string kind_;
};

inline MLPConfig read_mlp(const SchemaReader& r, const nlohmann::json& j, const std::string& where)
{
    MLPConfig c;
    c.input_dim = j.contains("input_dim") ? static_cast<int>(r.integer(j, "input_dim", where)) : c.input_dim;
    if (c.input_dim != static_cast<int>(kFeatureCount))
        r.fail(where + "input_dim must be " + std::to_string(kFeatureCount));
    c.hidden_layers = static_cast<int>(r.integer(j, "hidden_layers", where));
    c.hidden_units = static_cast<int>(r.integer(j, "hidden_units", where));
    try {
        c.activation = activation_from_string(r.string(j, "activation", where));
    } catch (const Error& e) {
        if (e.code() == Errc::schema_invalid)
            throw;
        r.fail(where + "activation: " + e.detail());
    }
    c.dropout_rate = r.number(j, "dropout_rate", where);
    try {
        c.validate();
    } catch (const Error& e) {
        r.fail(where + e.detail());
    }
    return c;
}

inline void check_kind(const TaskDocument& d, const std::string& kind)
{
    if (d.version != kTaskFormatVersion)
        throw Error(Errc::schema_invalid, "task document version " + std::to_string(d.version) + ", expected " +
                                              std::to_string(kTaskFormatVersion));
    if (d.kind != kind)
        throw Error(Errc::schema_invalid, "expected a " + kind + " task, got '" + d.kind + "'");
}

} // namespace detail

/// Accepts either {"members": [{"config", "seed"}...]} or
/// {"config", "ensemble_size", "base_seed"} (member i seeded derive_seed(base_seed, i)).
inline ModelTask parse_model_task(const TaskDocument& d)
{
    detail::check_kind(d, "model");
    const detail::SchemaReader r(d.payload, "model");
    ModelTask t;
    const auto& p = d.payload;
    if (p.contains("members")) {
        if (!p.at("members").is_array() || p.at("members").empty())
            r.fail("members must be a non-empty array");
        for (std::size_t i = 0; i < p.at("members").size(); ++i) {
            const auto& m = p.at("members")[i];
            const std::string where = "members[" + std::to_string(i) + "].";
            if (!m.is_object())
                r.fail(where + " must be an object");
            t.members.push_back({detail::read_mlp(r, r.object(m, "config", where), where + "config."),
                                 r.seed(m, "seed", where)});
        }
    } else {
        const auto config = detail::read_mlp(r, r.object(p, "config", ""), "config.");
        const auto size = r.integer(p, "ensemble_size", "");
        if (size < 1 || size > 64)
            r.fail("ensemble_size must lie in [1, 64]");
        const auto base = r.seed(p, "base_seed", "");
        for (long long i = 0; i < size; ++i)
            t.members.push_back({config, derive_seed(base, static_cast<std::uint64_t>(i))});
    }
    for (std::size_t i = 0; i < t.members.size(); ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (t.members[i].seed == t.members[k].seed)
                r.fail("member seeds must be distinct");
    return t;
}

inline TrainTask parse_train_task(const TaskDocument& d)
{
    detail::check_kind(d, "train");
    const detail::SchemaReader r(d.payload, "train");
    const auto& p = d.payload;
    TrainTask t;
    const auto& train = r.object(p, "train", "");
    t.train.learning_rate = r.number(train, "learning_rate", "train.");
    t.train.weight_decay = r.number(train, "weight_decay", "train.");
    t.train.batch_size = static_cast<int>(r.integer(train, "batch_size", "train."));
    t.train.epochs = static_cast<int>(r.integer(train, "epochs", "train."));
    t.train.patience = static_cast<int>(r.integer(train, "patience", "train."));
    try {
        t.train.validate();
    } catch (const Error& e) {
        r.fail("train." + e.detail());
    }
    const auto& split = r.object(p, "split", "");
    if (!split.contains("fractions") || !split.at("fractions").is_array() || split.at("fractions").size() != 3)
        r.fail("split.fractions must be an array of three numbers");
    for (const auto& f : split.at("fractions"))
        if (!f.is_number())
            r.fail("split.fractions must be an array of three numbers");
    t.fractions = {split.at("fractions")[0].get<double>(), split.at("fractions")[1].get<double>(),
                   split.at("fractions")[2].get<double>()};
    t.split_seed = r.seed(split, "seed", "split.");
    const auto& in = r.object(p, "inputs", "");
    const auto& out = r.object(p, "outputs", "");
    t.dataset = r.string(in, "dataset", "inputs.");
    t.model_spec = r.string(in, "model_spec", "inputs.");
    t.ensemble_dir = r.string(out, "ensemble_dir", "outputs.");
    return t;
}

inline EvaluateTask parse_evaluate_task(const TaskDocument& d)
{
    detail::check_kind(d, "evaluate");
    const detail::SchemaReader r(d.payload, "evaluate");
    const auto& p = d.payload;
    EvaluateTask t;
    if (!p.contains("metrics") || !p.at("metrics").is_array() || p.at("metrics").empty())
        r.fail("metrics must be a non-empty array");
    for (const auto& m : p.at("metrics")) {
        if (!m.is_string())
            r.fail("metrics entries must be strings");
        const auto name = m.get<std::string>();
        if (std::find(std::begin(kKnownMetrics), std::end(kKnownMetrics), name) == std::end(kKnownMetrics))
            r.fail("unknown metric '" + name + "'");
        t.metrics.push_back(name);
    }
    t.level = r.number(p, "level", "");
    if (!(t.level > 0.0 && t.level < 1.0))
        r.fail("level must lie in (0, 1)");
    if (p.contains("slices")) {
        if (!p.at("slices").is_array())
            r.fail("slices must be an array");
        for (const auto& s : p.at("slices")) {
            try {
                t.slices.push_back(slice_from_json(s));
            } catch (const Error& e) {
                r.fail("slices: " + e.detail());
            }
        }
    }
    const auto& in = r.object(p, "inputs", "");
    const auto& out = r.object(p, "outputs", "");
    t.dataset = r.string(in, "dataset", "inputs.");
    t.ensemble_dir = r.string(in, "ensemble_dir", "inputs.");
    t.report_dir = r.string(out, "report_dir", "outputs.");
    return t;
}

/// Schema check dispatched on kind; throws SchemaInvalid.
inline void validate(const TaskDocument& d)
{
    if (d.kind == "model")
        parse_model_task(d);
    else if (d.kind == "train")
        parse_train_task(d);
    else if (d.kind == "evaluate")
        parse_evaluate_task(d);
    else
        throw Error(Errc::schema_invalid, "unknown task kind '" + d.kind + "'");
}

/// The artifact role a task kind's document is registered under.
inline Role spec_role(const std::string& kind)
{
    if (kind == "model")
        return Role::model_spec;
    if (kind == "train")
        return Role::training_spec;
    if (kind == "evaluate")
        return Role::evaluation_spec;
    throw Error(Errc::schema_invalid, "unknown task kind '" + kind + "'");
}

/// Human-readable script rendering of a document, for audit trails.
inline std::string render_script(const TaskDocument& d)
{
    validate(d);
    std::ostringstream s;
    s << "# " << d.kind << " task";
    if (d.provenance.contains("planner"))
        s << ", planner " << d.provenance.at("planner").get<std::string>();
    if (d.provenance.contains("prompt_digest"))
        s << ", prompt " << d.provenance.at("prompt_digest").get<std::string>();
    s << "\n";
    if (d.kind == "model") {
        const auto t = parse_model_task(d);
        s << "members = []\n";
        for (const auto& m : t.members)
            s << "members.append(GaussianMLP(layers=" << m.config.hidden_layers << ", units=" << m.config.hidden_units
              << ", activation=\"" << to_string(m.config.activation) << "\", dropout=" << format_g17(m.config.dropout_rate)
              << ", seed=" << m.seed << "))\n";
    } else if (d.kind == "train") {
        const auto t = parse_train_task(d);
        s << "data = load_csv(\"" << t.dataset.string() << "\")\n"
          << "splits = split(data, fractions=(" << format_g17(t.fractions.train) << ", "
          << format_g17(t.fractions.validation) << ", " << format_g17(t.fractions.test) << "), seed=" << t.split_seed
          << ")\n"
          << "members = load_model_spec(\"" << t.model_spec.string() << "\")\n"
          << "ensemble = train_ensemble(splits, members, lr=" << format_g17(t.train.learning_rate)
          << ", weight_decay=" << format_g17(t.train.weight_decay) << ", batch_size=" << t.train.batch_size
          << ", epochs=" << t.train.epochs << ", patience=" << t.train.patience << ")\n"
          << "save_ensemble(ensemble, \"" << t.ensemble_dir.string() << "\")\n";
    } else {
        const auto t = parse_evaluate_task(d);
        s << "data = load_csv(\"" << t.dataset.string() << "\")\n"
          << "ensemble = load_ensemble(\"" << t.ensemble_dir.string() << "\")\n"
          << "report = evaluate_model(ensemble, data, metrics=[";
        for (std::size_t i = 0; i < t.metrics.size(); ++i)
            s << (i ? ", " : "") << '"' << t.metrics[i] << '"';
        s << "])\n";
        if (!t.slices.empty())
            s << "report.slices = evaluate_slices(ensemble, " << t.slices.size()
              << " slices, level=" << format_g17(t.level) << ")\n";
        s << "export_report(report, \"" << t.report_dir.string() << "\")\n";
    }
    return s.str();
}

} // namespace autoduct::agents
