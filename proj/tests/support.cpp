#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace testing {

void write_cube_inputs(const fs::path& dir) {
    using namespace scribtex;
    fs::create_directories(dir);
    save_mesh(make_cube_charts(gradient_atlas(256, Rgb{150, 110, 70}, Rgb{95, 70, 45})), dir / "cube.obj",
              dir / "cube.png");
    std::ofstream(dir / "strokes.json")
        << R"({"strokes":[{"view_id":"intent-0","color":[200,30,30],"radius":12,)"
        << R"("points":[[200,230],[260,250],[310,240]]}]})";
}

int run_cli(const std::string& args, const fs::path& log, const std::string& env) {
    std::string cmd = env.empty() ? "" : env + " ";
    cmd += std::string("\"") + SCRIBTEX_CLI_PATH + "\" " + args;
    cmd += log.empty() ? " >/dev/null 2>&1" : " >\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace testing
