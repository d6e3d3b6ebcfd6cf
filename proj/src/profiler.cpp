#include "lcdnet/profiler.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace lcdnet {

std::int64_t ComplexityReport::total_params() const {
    std::int64_t t = 0;
    for (const auto& r : rows) {
        t += r.params;
    }
    return t;
}

std::int64_t ComplexityReport::total_macs() const {
    std::int64_t t = 0;
    for (const auto& r : rows) {
        t += r.macs;
    }
    return t;
}

std::int64_t ComplexityReport::total_buffers() const {
    std::int64_t t = 0;
    for (const auto& r : rows) {
        t += r.buffers;
    }
    return t;
}

std::string ComplexityReport::table() const {
    std::size_t name_w = 5;
    for (const auto& r : rows) {
        name_w = std::max(name_w, r.name.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w)) << "layer" << std::right
       << std::setw(18) << "output" << std::setw(14) << "params" << std::setw(16) << "macs"
       << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(static_cast<int>(name_w)) << r.name << std::right
           << std::setw(18) << r.out.str() << std::setw(14) << r.params << std::setw(16) << r.macs
           << "\n";
    }
    os << std::left << std::setw(static_cast<int>(name_w)) << "total" << std::right
       << std::setw(18) << "" << std::setw(14) << total_params() << std::setw(16) << total_macs()
       << "\n";
    os << "input " << input_hw << "x" << input_hw << ", non-trainable buffers "
       << total_buffers() << "\n";
    os << std::fixed << std::setprecision(4) << "params " << total_params() / 1e6
       << " M, flops " << gflops_1x() << " G (1 flop/mac) | " << gflops_2x()
       << " G (2 flops/mac)\n";
    return os.str();
}

void ComplexityReport::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    f << "layer,out_n,out_c,out_h,out_w,params,macs\n";
    for (const auto& r : rows) {
        f << r.name << ',' << r.out.n << ',' << r.out.c << ',' << r.out.h << ',' << r.out.w << ','
          << r.params << ',' << r.macs << "\n";
    }
    if (!f) {
        throw std::runtime_error("failed writing report to '" + path + "'");
    }
}

ComplexityReport ComplexityReport::read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open report '" + path + "'");
    }
    std::string line;
    if (!std::getline(f, line) || line.rfind("layer,", 0) != 0) {
        throw std::runtime_error("report '" + path + "' is missing the CSV header");
    }
    ComplexityReport rep;
    while (std::getline(f, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        LayerRow r;
        std::string field;
        std::getline(ls, r.name, ',');
        auto next_i64 = [&]() {
            if (!std::getline(ls, field, ',')) {
                throw std::runtime_error("malformed report row: " + line);
            }
            return static_cast<std::int64_t>(std::stoll(field));
        };
        r.out.n = next_i64();
        r.out.c = next_i64();
        r.out.h = next_i64();
        r.out.w = next_i64();
        r.params = next_i64();
        r.macs = next_i64();
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

}  // namespace lcdnet
