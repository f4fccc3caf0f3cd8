#include "hdst/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hdst::model {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string shape_token(const Shape& s) {
    if (s.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

Shape parse_shape(const std::string& tok) {
    if (tok == "scalar") return {};
    Shape s;
    std::stringstream ss(tok);
    std::string part;
    while (std::getline(ss, part, 'x')) s.push_back(std::stoul(part));
    return s;
}

void put_f64(std::vector<unsigned char>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const HdstModel& model, const OptimizerState* optimizer,
                     const std::map<std::string, std::string>& meta) {
    std::ostringstream man;
    std::vector<unsigned char> blob;
    std::size_t offset = 0;
    auto add_tensor = [&](const std::string& name, const Tensor& t) {
        man << "tensor " << name << ' ' << offset << ' ' << t.numel() << ' ' << shape_token(t.shape()) << '\n';
        for (double v : t.storage()) put_f64(blob, v);
        offset += t.numel();
    };

    man << "HDSTCKPT 1\n";
    const nlohmann::json cfg = to_json(model.config());
    for (const auto& [key, value] : cfg.items()) man << "config." << key << ' ' << value.dump() << '\n';
    for (const auto& [key, value] : meta) {
        if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos)
            throw std::invalid_argument("checkpoint meta keys must not contain spaces or newlines");
        man << "meta." << key << ' ' << value << '\n';
    }
    if (optimizer) {
        man << "optim.step " << optimizer->step << '\n'
            << "optim.learning_rate " << fmt_double(optimizer->learning_rate) << '\n'
            << "optim.beta1 " << fmt_double(optimizer->beta1) << '\n'
            << "optim.beta2 " << fmt_double(optimizer->beta2) << '\n'
            << "optim.epsilon " << fmt_double(optimizer->epsilon) << '\n';
    }
    for (const auto& p : model.parameters()) add_tensor(p.name, p.var.value());
    if (optimizer) {
        for (const auto& [name, m] : optimizer->moments) {
            add_tensor("adam.m:" + name, m.first);
            add_tensor("adam.v:" + name, m.second);
        }
    }

    // Write both files through temporaries so a failed save never clobbers
    // a previous good checkpoint.
    auto write = [](const std::string& p, const char* data, std::size_t n) {
        const std::string tmp = p + ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw IoError("cannot open " + tmp + " for writing");
            f.write(data, std::streamsize(n));
            if (!f) throw IoError("write failed: " + tmp);
        }
        if (std::rename(tmp.c_str(), p.c_str()) != 0) throw IoError("cannot rename " + tmp + " to " + p);
    };
    const std::string text = man.str();
    write(path + ".bin", reinterpret_cast<const char*>(blob.data()), blob.size());
    write(path, text.data(), text.size());
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream mf(path);
    if (!mf) throw IoError("cannot open checkpoint " + path);
    std::ifstream bf(path + ".bin", std::ios::binary);
    if (!bf) throw IoError("cannot open checkpoint blob " + path + ".bin");
    const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    Checkpoint ck;
    nlohmann::json cfg = nlohmann::json::object();
    OptimizerState opt;
    bool has_opt = false;
    std::map<std::string, Tensor> moments;
    std::string line;
    if (!std::getline(mf, line) || line != "HDSTCKPT 1") throw IoError(path + ": not an HDST checkpoint manifest");
    std::size_t lineno = 1;
    try {
        while (std::getline(mf, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto sp = line.find(' ');
            const std::string key = line.substr(0, sp);
            const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
            if (key.rfind("config.", 0) == 0) {
                cfg[key.substr(7)] = nlohmann::json::parse(rest);
            } else if (key.rfind("meta.", 0) == 0) {
                ck.meta[key.substr(5)] = rest;
            } else if (key.rfind("optim.", 0) == 0) {
                has_opt = true;
                const std::string f = key.substr(6);
                if (f == "step") opt.step = std::stoull(rest);
                else if (f == "learning_rate") opt.learning_rate = std::stod(rest);
                else if (f == "beta1") opt.beta1 = std::stod(rest);
                else if (f == "beta2") opt.beta2 = std::stod(rest);
                else if (f == "epsilon") opt.epsilon = std::stod(rest);
                else throw IoError("unknown optimizer field " + f);
            } else if (key == "tensor") {
                std::istringstream ss(rest);
                std::string name, shape_tok;
                std::size_t offset = 0, count = 0;
                if (!(ss >> name >> offset >> count >> shape_tok)) throw IoError("malformed tensor record");
                const Shape shape = parse_shape(shape_tok);
                if (shape_numel(shape) != count) throw IoError("tensor " + name + " count disagrees with shape");
                if ((offset + count) * 8 > blob.size()) throw IoError("tensor " + name + " runs past end of blob");
                Tensor t(shape);
                for (std::size_t i = 0; i < count; ++i) t[i] = get_f64(blob.data() + 8 * (offset + i));
                if (name.rfind("adam.", 0) == 0) moments.emplace(name, std::move(t));
                else ck.params.emplace(name, std::move(t));
            } else {
                throw IoError("unknown record '" + key + "'");
            }
        }
    } catch (const std::exception& e) {
        throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ck.config = model_config_from_json(cfg);
    if (has_opt) {
        for (const auto& [name, t] : moments) {
            if (name.rfind("adam.m:", 0) != 0) continue;
            const std::string p = name.substr(7);
            const auto v = moments.find("adam.v:" + p);
            if (v == moments.end()) throw IoError(path + ": missing second moment for " + p);
            opt.moments[p] = AdamMoments{t, v->second};
        }
        ck.optimizer = std::move(opt);
    }
    return ck;
}

void load_parameters(HdstModel& model, const Checkpoint& ckpt) {
    for (const auto& p : model.parameters()) {
        const auto it = ckpt.params.find(p.name);
        if (it == ckpt.params.end()) throw ShapeError("checkpoint lacks parameter " + p.name);
        if (it->second.shape() != p.var.shape())
            throw ShapeError("checkpoint parameter " + p.name + " has shape " + shape_string(it->second.shape()) +
                             ", model expects " + shape_string(p.var.shape()));
        Variable v = p.var;
        v.mutable_value() = it->second;
    }
    if (ckpt.params.size() != model.parameters().size())
        throw ShapeError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                         std::to_string(model.parameters().size()));
}

HdstModel model_from_checkpoint(const Checkpoint& ckpt) {
    HdstModel m(ckpt.config);
    load_parameters(m, ckpt);
    return m;
}

}  // namespace hdst::model
