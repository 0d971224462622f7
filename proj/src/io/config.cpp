#include <algorithm>
#include <set>
#include <tuple>

#include <json.hpp>

#include "nextvit/io.hpp"

namespace nextvit {

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

void reject_unknown(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.contains(it.key())) {
      fail(ErrorKind::UnknownKey, "unknown key \"" + it.key() + "\"" + (where.empty() ? "" : " in " + where));
    }
  }
}

[[noreturn]] void bad_type(const std::string& key, const char* expected) {
  fail(ErrorKind::ParseError, "key \"" + key + "\": expected " + expected);
}

std::int64_t get_int(const Json& j, const std::string& key) {
  if (!j.is_number_integer()) bad_type(key, "an integer");
  return j.get<std::int64_t>();
}

double get_number(const Json& j, const std::string& key) {
  if (!j.is_number()) bad_type(key, "a number");
  return j.get<double>();
}

std::string get_string(const Json& j, const std::string& key) {
  if (!j.is_string()) bad_type(key, "a string");
  return j.get<std::string>();
}

bool get_bool(const Json& j, const std::string& key) {
  if (!j.is_boolean()) bad_type(key, "a boolean");
  return j.get<bool>();
}

std::array<std::int64_t, 4> get_int4(const Json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 4) bad_type(key, "an array of 4 integers");
  std::array<std::int64_t, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = get_int(j[i], key);
  return out;
}

std::pair<NormKind, ActKind> parse_norm_act(const std::string& s) {
  const auto us = s.find('_');
  if (us == std::string::npos) fail(ErrorKind::ParseError, "norm_act \"" + s + "\" must look like bn_relu");
  const std::string n = s.substr(0, us);
  const std::string a = s.substr(us + 1);
  NormKind norm{};
  if (n == "bn") {
    norm = NormKind::BatchNorm;
  } else if (n == "ln") {
    norm = NormKind::LayerNorm;
  } else if (n == "id") {
    norm = NormKind::Identity;
  } else {
    fail(ErrorKind::ParseError, "norm_act \"" + s + "\": norm must be bn, ln or id");
  }
  ActKind act{};
  if (a == "relu") {
    act = ActKind::ReLU;
  } else if (a == "gelu") {
    act = ActKind::GELU;
  } else {
    fail(ErrorKind::ParseError, "norm_act \"" + s + "\": activation must be relu or gelu");
  }
  return {norm, act};
}

BlockType parse_block_type(const std::string& s) {
  if (s == "NCB" || s == "ncb") return BlockType::NCB;
  if (s == "NTB" || s == "ntb") return BlockType::NTB;
  fail(ErrorKind::ParseError, "block type \"" + s + "\" must be NCB or NTB");
}

HybridPattern parse_pattern(const Json& j, HybridPattern base) {
  if (j.is_string()) {
    HybridPattern p = HybridPattern::parse(j.get<std::string>());
    base.letters = p.letters;
    return base;
  }
  if (!j.is_object()) bad_type("pattern", "a string or an object");
  reject_unknown(j, {"letters", "N", "L"}, "pattern");
  if (!j.contains("letters")) fail(ErrorKind::ParseError, "pattern object requires \"letters\"");
  base.letters = HybridPattern::parse(get_string(j["letters"], "pattern.letters")).letters;
  if (j.contains("N")) base.n = get_int4(j["N"], "pattern.N");
  if (j.contains("L")) base.l = get_int4(j["L"], "pattern.L");
  return base;
}

std::vector<StageSpec> parse_stages(const Json& j) {
  if (!j.is_array() || j.empty()) bad_type("stages", "a non-empty array");
  std::vector<StageSpec> stages;
  for (std::size_t s = 0; s < j.size(); ++s) {
    const std::string where = "stages[" + std::to_string(s) + "]";
    const Json& st = j[s];
    if (!st.is_object()) bad_type(where, "an object");
    reject_unknown(st, {"embed", "sr_ratio", "blocks"}, where);
    if (!st.contains("embed")) fail(ErrorKind::ParseError, where + " requires \"embed\"");
    StageSpec out;
    const Json& e = st["embed"];
    if (!e.is_object()) bad_type(where + ".embed", "an object");
    reject_unknown(e, {"downsample", "channels"}, where + ".embed");
    if (!e.contains("channels")) fail(ErrorKind::ParseError, where + ".embed requires \"channels\"");
    out.embed.out_channels = get_int(e["channels"], where + ".embed.channels");
    out.embed.downsample = e.contains("downsample") ? get_bool(e["downsample"], where + ".embed.downsample") : true;
    out.sr_ratio = st.contains("sr_ratio") ? get_int(st["sr_ratio"], where + ".sr_ratio") : 1;
    std::int64_t prev = out.embed.out_channels;
    if (st.contains("blocks")) {
      const Json& bl = st["blocks"];
      if (!bl.is_array()) bad_type(where + ".blocks", "an array");
      for (std::size_t b = 0; b < bl.size(); ++b) {
        const std::string bw = where + ".blocks[" + std::to_string(b) + "]";
        const Json& g = bl[b];
        if (!g.is_object()) bad_type(bw, "an object");
        reject_unknown(g, {"type", "channels", "repeat"}, bw);
        if (!g.contains("type") || !g.contains("channels")) {
          fail(ErrorKind::ParseError, bw + " requires \"type\" and \"channels\"");
        }
        const BlockType t = parse_block_type(get_string(g["type"], bw + ".type"));
        const std::int64_t c = get_int(g["channels"], bw + ".channels");
        const std::int64_t rep = g.contains("repeat") ? get_int(g["repeat"], bw + ".repeat") : 1;
        if (rep < 1) fail(ErrorKind::ParseError, bw + ".repeat must be >= 1");
        for (std::int64_t r = 0; r < rep; ++r) {
          out.blocks.push_back({t, prev, c});
          prev = c;
        }
      }
    }
    stages.push_back(std::move(out));
  }
  return stages;
}

}  // namespace

std::string norm_act_name(NormKind norm, ActKind act) { return to_string(norm) + "_" + to_string(act); }

ModelSpec parse_config(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n');
    fail(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }
  if (!doc.is_object()) fail(ErrorKind::ParseError, "line 1: configuration must be a JSON object");
  reject_unknown(doc,
                 {"variant", "pattern", "stages", "num_classes", "norm_act", "attn_scale_mode", "shrink_ratio",
                  "sr_ratios", "head_dim", "mlp_ratios"},
                 "");
  if (doc.contains("stages") && (doc.contains("variant") || doc.contains("pattern"))) {
    fail(ErrorKind::ParseError, "\"stages\" cannot be combined with \"variant\" or \"pattern\"");
  }
  const std::int64_t classes = doc.contains("num_classes") ? get_int(doc["num_classes"], "num_classes") : 1000;
  if (classes < 1) fail(ErrorKind::ParseError, "num_classes must be >= 1");

  ModelSpec spec;
  if (doc.contains("stages")) {
    spec.num_classes = classes;
    spec.stages = parse_stages(doc["stages"]);
  } else {
    const Variant v = doc.contains("variant") ? parse_variant(get_string(doc["variant"], "variant")) : Variant::S;
    HybridPattern p = HybridPattern::for_variant(v);
    if (doc.contains("pattern")) p = parse_pattern(doc["pattern"], p);
    spec = build_hybrid(p, default_widths(), classes);
  }
  if (doc.contains("norm_act")) {
    std::tie(spec.norm, spec.act) = parse_norm_act(get_string(doc["norm_act"], "norm_act"));
  }
  if (doc.contains("attn_scale_mode")) {
    const std::string m = get_string(doc["attn_scale_mode"], "attn_scale_mode");
    if (m == "sqrt") {
      spec.attn_scale_mode = AttnScaleMode::Sqrt;
    } else if (m == "linear") {
      spec.attn_scale_mode = AttnScaleMode::Linear;
    } else {
      fail(ErrorKind::ParseError, "attn_scale_mode must be sqrt or linear");
    }
  }
  if (doc.contains("shrink_ratio")) spec.shrink_ratio = get_number(doc["shrink_ratio"], "shrink_ratio");
  if (doc.contains("head_dim")) spec.head_dim = get_int(doc["head_dim"], "head_dim");
  if (doc.contains("sr_ratios")) {
    const Json& sr = doc["sr_ratios"];
    if (!sr.is_array() || sr.size() != spec.stages.size()) bad_type("sr_ratios", "one integer per stage");
    for (std::size_t s = 0; s < spec.stages.size(); ++s) spec.stages[s].sr_ratio = get_int(sr[s], "sr_ratios");
  }
  if (doc.contains("mlp_ratios")) {
    const Json& m = doc["mlp_ratios"];
    if (!m.is_array() || m.size() != 2) bad_type("mlp_ratios", "[ncb_ratio, ntb_ratio]");
    spec.ncb_mlp_ratio = get_number(m[0], "mlp_ratios");
    spec.ntb_mlp_ratio = get_number(m[1], "mlp_ratios");
  }
  spec.validate();
  return spec;
}

ModelSpec load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string render_config(const ModelSpec& spec) {
  OrderedJson doc;
  OrderedJson stages = OrderedJson::array();
  for (const auto& st : spec.stages) {
    OrderedJson s;
    s["embed"] = {{"downsample", st.embed.downsample}, {"channels", st.embed.out_channels}};
    s["sr_ratio"] = st.sr_ratio;
    OrderedJson blocks = OrderedJson::array();
    for (std::size_t b = 0; b < st.blocks.size();) {
      std::size_t e = b;
      while (e < st.blocks.size() && st.blocks[e].type == st.blocks[b].type &&
             st.blocks[e].out_channels == st.blocks[b].out_channels) {
        ++e;
      }
      OrderedJson g;
      g["type"] = st.blocks[b].type == BlockType::NCB ? "NCB" : "NTB";
      g["channels"] = st.blocks[b].out_channels;
      g["repeat"] = e - b;
      blocks.push_back(std::move(g));
      b = e;
    }
    s["blocks"] = std::move(blocks);
    stages.push_back(std::move(s));
  }
  doc["stages"] = std::move(stages);
  doc["num_classes"] = spec.num_classes;
  doc["norm_act"] = norm_act_name(spec.norm, spec.act);
  doc["attn_scale_mode"] = to_string(spec.attn_scale_mode);
  doc["shrink_ratio"] = spec.shrink_ratio;
  doc["head_dim"] = spec.head_dim;
  doc["mlp_ratios"] = {spec.ncb_mlp_ratio, spec.ntb_mlp_ratio};
  return doc.dump(2) + "\n";
}

}  // namespace nextvit
